//! Toy problem: recover the mean of a Gaussian waveform observed in additive
//! Gaussian noise of unknown standard deviation.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::models::nef::{alpha_of_theta, theta_of_alpha};
use crate::rng::{stream, Purpose, StreamRng};
use crate::smc::{Particle, TemperedModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Settings of the synthetic toy data generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDataConfig {
    pub n_obs: usize,
    pub interval: (f64, f64),
    pub mu_true: f64,
    pub waveform_sigma: f64,
    pub theta_true_range: (f64, f64),
    /// Suppress the additive noise.
    #[serde(default)]
    pub zero_noise: bool,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            n_obs: 100,
            interval: (-5.0, 5.0),
            mu_true: 0.0,
            waveform_sigma: 1.0,
            theta_true_range: (0.1, 0.2),
            zero_noise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub seed: u64,
    pub times: Vec<f64>,
    pub data: Vec<f64>,
    pub waveform_sigma: f64,
    pub mu_true: f64,
    pub theta_true: f64,
}

/// Value of the `N(mu, sigma^2)` density at `t`.
pub fn waveform(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = (t - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn generate_toy_data(seed: u64, config: &ToyDataConfig) -> ToyDataset {
    let mut rng = stream(seed, Purpose::Data, 0, 0);
    let (lo, hi) = config.theta_true_range;
    let theta_true = lo + (hi - lo) * rng.random::<f64>();
    let times = linspace(config.interval.0, config.interval.1, config.n_obs);
    let data = times
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let noise = if config.zero_noise { 0.0 } else { theta_true * z };
            waveform(t, config.mu_true, config.waveform_sigma) + noise
        })
        .collect();
    ToyDataset {
        seed,
        times,
        data,
        waveform_sigma: config.waveform_sigma,
        mu_true: config.mu_true,
        theta_true,
    }
}

/// Toy posterior model with uniform prior on `mu` and noise level
/// `theta(alpha) = theta_star / sqrt(alpha)` along the tempering path.
#[derive(Debug)]
pub struct ToyModel {
    pub times: Vec<f64>,
    pub data: Vec<f64>,
    pub waveform_sigma: f64,
    pub mu_bounds: (f64, f64),
    pub theta_star: f64,
    evaluations: AtomicU64,
}

impl Clone for ToyModel {
    fn clone(&self) -> Self {
        Self {
            times: self.times.clone(),
            data: self.data.clone(),
            waveform_sigma: self.waveform_sigma,
            mu_bounds: self.mu_bounds,
            theta_star: self.theta_star,
            evaluations: AtomicU64::new(0),
        }
    }
}

impl ToyModel {
    pub fn new(times: Vec<f64>, data: Vec<f64>, waveform_sigma: f64, theta_star: f64) -> Result<Self> {
        if times.len() != data.len() {
            return Err(SmcError::InvalidArgument(format!(
                "{} times but {} observations",
                times.len(),
                data.len()
            )));
        }
        if !(theta_star > 0.0) || !(waveform_sigma > 0.0) {
            return Err(SmcError::InvalidArgument(
                "theta_star and waveform sigma must be positive".into(),
            ));
        }
        Ok(Self {
            times,
            data,
            waveform_sigma,
            mu_bounds: (-5.0, 5.0),
            theta_star,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn from_dataset(ds: &ToyDataset, theta_star: f64) -> Result<Self> {
        Self::new(ds.times.clone(), ds.data.clone(), ds.waveform_sigma, theta_star)
    }

    pub fn n_obs(&self) -> usize {
        self.data.len()
    }

    pub fn in_support(&self, mu: f64) -> bool {
        mu >= self.mu_bounds.0 && mu <= self.mu_bounds.1
    }

    /// Residual sum of squares against the waveform centred at `mu`. This is
    /// the forward-model evaluation counted by [`TemperedModel::evaluations`].
    pub fn residual_ss(&self, mu: f64) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.times
            .iter()
            .zip(&self.data)
            .map(|(&t, &y)| {
                let r = y - waveform(t, mu, self.waveform_sigma);
                r * r
            })
            .sum()
    }

    /// Gaussian log-likelihood at noise std `theta` given the residual sum of squares.
    pub fn log_likelihood_from_rss(&self, rss: f64, theta: f64) -> f64 {
        let n = self.n_obs() as f64;
        -n * theta.ln() - 0.5 * n * LN_2PI - rss / (2.0 * theta * theta)
    }

    fn rss_from_log_likelihood(&self, ll: f64, theta: f64) -> f64 {
        let n = self.n_obs() as f64;
        -2.0 * theta * theta * (ll + n * theta.ln() + 0.5 * n * LN_2PI)
    }

    /// `sum_i log N(y_i; waveform(t_i; mu, sigma), theta^2)`.
    pub fn toy_log_likelihood(&self, mu: f64, theta: f64) -> f64 {
        self.log_likelihood_from_rss(self.residual_ss(mu), theta)
    }

    pub fn log_prior_mu(&self, mu: f64) -> f64 {
        if self.in_support(mu) {
            -(self.mu_bounds.1 - self.mu_bounds.0).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn theta(&self, alpha: f64) -> f64 {
        theta_of_alpha(self.theta_star, alpha).unwrap_or(f64::INFINITY)
    }

    /// Same model with a different terminal noise level.
    pub fn with_theta_star(&self, theta_star: f64) -> Result<Self> {
        let mut m = Self::new(self.times.clone(), self.data.clone(), self.waveform_sigma, theta_star)?;
        m.mu_bounds = self.mu_bounds;
        Ok(m)
    }
}

/// Proposal scale for the Gaussian random-walk kernel.
#[derive(Debug, Clone, Copy)]
pub struct RandomWalkScale(pub f64);

/// Weighted mean and standard deviation.
pub fn weighted_moments(xs: impl Iterator<Item = f64>, weights: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = xs.collect();
    let mean: f64 = xs.iter().zip(weights).map(|(x, w)| x * w).sum();
    let var: f64 = xs.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
    (mean, var.max(0.0).sqrt())
}

impl TemperedModel for ToyModel {
    type State = f64;
    type Tuning = RandomWalkScale;

    fn id(&self) -> String {
        "toy".into()
    }

    fn theta_of_alpha(&self, alpha: f64) -> Option<f64> {
        (alpha > 0.0).then(|| self.theta(alpha))
    }

    fn alpha_of_theta(&self, theta: f64) -> Option<f64> {
        (theta > 0.0).then(|| alpha_of_theta(self.theta_star, theta))
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> f64 {
        let (a, b) = self.mu_bounds;
        a + (b - a) * rng.random::<f64>()
    }

    fn log_prior(&self, mu: &f64) -> f64 {
        self.log_prior_mu(*mu)
    }

    fn log_likelihood(&self, mu: &f64, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return 0.0;
        }
        self.toy_log_likelihood(*mu, self.theta(alpha))
    }

    fn retemper(&self, _mu: &f64, cached: f64, from: f64, to: f64) -> Option<f64> {
        if from <= 0.0 || to <= 0.0 {
            return None;
        }
        let rss = self.rss_from_log_likelihood(cached, self.theta(from));
        Some(self.log_likelihood_from_rss(rss, self.theta(to)))
    }

    fn tune(&self, particles: &[Particle<f64>], weights: &[f64]) -> RandomWalkScale {
        let (_, sd) = weighted_moments(particles.iter().map(|p| p.state), weights);
        RandomWalkScale(sd.max(1e-6))
    }

    fn mcmc_sweep(
        &self,
        p: &mut Particle<f64>,
        alpha: f64,
        tuning: &RandomWalkScale,
        rng: &mut StreamRng,
    ) -> Result<usize> {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = p.state + tuning.0 * z;
        if !self.in_support(proposal) {
            // reject without touching the random stream further
            let _: f64 = rng.random();
            return Ok(0);
        }
        let ll = self.log_likelihood(&proposal, alpha);
        if crate::smc::mh::mh_accept(p.log_likelihood, ll, 0.0, rng)? {
            p.state = proposal;
            p.log_likelihood = ll;
            Ok(1)
        } else {
            Ok(0)
        }
    }

    fn coords(&self, mu: &f64) -> Vec<f64> {
        vec![*mu]
    }

    fn from_coords(&self, coords: &[f64]) -> Result<f64> {
        match coords {
            [mu] => Ok(*mu),
            _ => Err(SmcError::InvalidArgument("toy state has one coordinate".into())),
        }
    }

    fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::nef::log_gaussian_power_constant;

    #[test]
    fn zero_residual_log_likelihood() {
        let times = linspace(-5.0, 5.0, 7);
        let data: Vec<f64> = times.iter().map(|&t| waveform(t, 0.3, 1.0)).collect();
        let m = ToyModel::new(times, data, 1.0, 0.05).unwrap();
        let ll = m.toy_log_likelihood(0.3, 1.0);
        assert!((ll + 3.5 * (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_unit_residual() {
        let y = waveform(0.0, 0.0, 1.0) + 1.0;
        let m = ToyModel::new(vec![0.0], vec![y], 1.0, 0.05).unwrap();
        let ll = m.toy_log_likelihood(0.0, 1.0);
        assert!((ll - (-0.5 * (2.0 * PI).ln() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn tempered_likelihood_is_likelihood_at_scaled_theta() {
        let ds = generate_toy_data(3, &ToyDataConfig::default());
        let m = ToyModel::from_dataset(&ds, 0.05).unwrap();
        let n = m.n_obs();
        for &(mu, theta, alpha) in &[(0.1, 0.05, 0.3), (-1.0, 0.2, 0.01), (2.0, 1.0, 0.9)] {
            let powered = alpha * m.toy_log_likelihood(mu, theta);
            let scaled = m.toy_log_likelihood(mu, theta / f64::sqrt(alpha));
            // [N(y; f, theta^2 I)]^alpha = c * N(y; f, theta^2/alpha I)
            let log_c = log_gaussian_power_constant(n, n as f64 * (theta * theta).ln(), alpha);
            assert!((powered - (log_c + scaled)).abs() < 1e-10 * powered.abs().max(1.0));
        }
    }

    #[test]
    fn retemper_matches_direct_evaluation() {
        let ds = generate_toy_data(5, &ToyDataConfig::default());
        let m = ToyModel::from_dataset(&ds, 0.05).unwrap();
        let cached = m.log_likelihood(&0.2, 1e-3);
        let direct = m.log_likelihood(&0.2, 0.7);
        let re = m.retemper(&0.2, cached, 1e-3, 0.7).unwrap();
        assert!((re - direct).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn zero_noise_data_is_waveform() {
        let cfg = ToyDataConfig {
            zero_noise: true,
            ..Default::default()
        };
        let ds = generate_toy_data(11, &cfg);
        assert_eq!(ds.data.len(), 100);
        for (t, y) in ds.times.iter().zip(&ds.data) {
            assert_eq!(*y, waveform(*t, 0.0, 1.0));
        }
        assert_eq!(ds.times[0], -5.0);
        assert_eq!(ds.times[99], 5.0);
    }

    #[test]
    fn data_is_deterministic_per_seed() {
        let a = generate_toy_data(42, &ToyDataConfig::default());
        let b = generate_toy_data(42, &ToyDataConfig::default());
        let c = generate_toy_data(43, &ToyDataConfig::default());
        assert_eq!(a.theta_true.to_bits(), b.theta_true.to_bits());
        assert_eq!(a, b);
        assert_ne!(a.theta_true, c.theta_true);
        assert!((0.1..0.2).contains(&a.theta_true));
    }

    #[test]
    fn residual_spread_matches_theta_true() {
        let cfg = ToyDataConfig {
            n_obs: 10_000,
            ..Default::default()
        };
        let ds = generate_toy_data(8, &cfg);
        let resid: Vec<f64> = ds
            .times
            .iter()
            .zip(&ds.data)
            .map(|(&t, &y)| y - waveform(t, 0.0, 1.0))
            .collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd / ds.theta_true - 1.0).abs() < 0.03);
    }

    #[test]
    fn evaluation_counter_counts_forward_model_only() {
        let ds = generate_toy_data(1, &ToyDataConfig::default());
        let m = ToyModel::from_dataset(&ds, 0.05).unwrap();
        let ll = m.log_likelihood(&0.0, 0.5);
        assert_eq!(m.evaluations(), 1);
        m.retemper(&0.0, ll, 0.5, 0.9).unwrap();
        assert_eq!(m.evaluations(), 1);
    }
}
