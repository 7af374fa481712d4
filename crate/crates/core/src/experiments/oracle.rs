//! Deterministic quadrature reference values for the toy model, used to
//! check the sampler-based estimates.

use crate::hyper::numeric::{golden_section_max, integrate_piecewise};
use crate::hyper::prior::HyperPrior;
use crate::models::toy::{waveform, ToyModel};
use crate::smc::weights::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Residual sums of squares on a fine `mu` grid; everything else follows in
/// closed form per `theta`.
#[derive(Debug, Clone)]
pub struct ToyOracle {
    mu: Vec<f64>,
    rss: Vec<f64>,
    /// Simpson weights times the uniform prior density, in logs.
    log_w: Vec<f64>,
    n_obs: usize,
}

impl ToyOracle {
    /// `n_mu` must be odd.
    pub fn new(model: &ToyModel, n_mu: usize) -> Self {
        assert!(n_mu % 2 == 1 && n_mu >= 3);
        let (a, b) = model.mu_bounds;
        let h = (b - a) / (n_mu - 1) as f64;
        let mu: Vec<f64> = (0..n_mu).map(|i| a + i as f64 * h).collect();
        let rss = mu
            .iter()
            .map(|&m| {
                model
                    .times
                    .iter()
                    .zip(&model.data)
                    .map(|(&t, &y)| (y - waveform(t, m, model.waveform_sigma)).powi(2))
                    .sum()
            })
            .collect();
        let log_w = (0..n_mu)
            .map(|i| {
                let c = if i == 0 || i == n_mu - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                (c * h / 3.0).ln() - (b - a).ln()
            })
            .collect();
        Self { mu, rss, log_w, n_obs: model.n_obs() }
    }

    fn log_terms(&self, theta: f64) -> Vec<f64> {
        let n = self.n_obs as f64;
        let c = -n * theta.ln() - 0.5 * n * LN_2PI;
        self.rss
            .iter()
            .zip(&self.log_w)
            .map(|(r, w)| w + c - r / (2.0 * theta * theta))
            .collect()
    }

    /// `ln p^theta(y)` with the uniform prior on `mu`.
    pub fn log_evidence(&self, theta: f64) -> f64 {
        log_sum_exp(&self.log_terms(theta))
    }

    /// `E[mu | y, theta]`.
    pub fn mu_mean(&self, theta: f64) -> f64 {
        let lt = self.log_terms(theta);
        let z = log_sum_exp(&lt);
        lt.iter().zip(&self.mu).map(|(l, m)| m * (l - z).exp()).sum()
    }

    /// `sd[mu | y, theta]`.
    pub fn mu_sd(&self, theta: f64) -> f64 {
        let lt = self.log_terms(theta);
        let z = log_sum_exp(&lt);
        let m1 = self.mu_mean(theta);
        lt.iter()
            .zip(&self.mu)
            .map(|(l, m)| (m - m1).powi(2) * (l - z).exp())
            .sum::<f64>()
            .sqrt()
    }

    /// Joint `(mu, theta)` posterior under `prior`.
    pub fn joint(&self, prior: &HyperPrior) -> ToyJointOracle<'_> {
        let (lo, hi) = prior.support;
        let breaks: Vec<f64> = (0..=400).map(|i| lo.ln() + (hi / lo).ln() * i as f64 / 400.0).collect();
        let log_un = |th: f64| self.log_evidence(th) + prior.log_density(th);
        let shift = breaks.iter().map(|&u| log_un(u.exp())).fold(f64::NEG_INFINITY, f64::max);
        let z = integrate_piecewise(|u| (log_un(u.exp()) - shift + u).exp(), &breaks, 1e-10);
        ToyJointOracle { oracle: self, prior: *prior, breaks, log_norm: shift + z.ln() }
    }
}

#[derive(Debug, Clone)]
pub struct ToyJointOracle<'a> {
    oracle: &'a ToyOracle,
    prior: HyperPrior,
    breaks: Vec<f64>,
    log_norm: f64,
}

impl ToyJointOracle<'_> {
    /// Marginal posterior density `p(theta | y)`.
    pub fn theta_density(&self, theta: f64) -> f64 {
        (self.oracle.log_evidence(theta) + self.prior.log_density(theta) - self.log_norm).exp()
    }

    fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        integrate_piecewise(
            |u| {
                let th = u.exp();
                f(th) * self.theta_density(th) * th
            },
            &self.breaks,
            1e-10,
        )
    }

    pub fn theta_mean(&self) -> f64 {
        self.expect(|t| t)
    }

    pub fn theta_sd(&self) -> f64 {
        let m = self.theta_mean();
        self.expect(|t| (t - m).powi(2)).sqrt()
    }

    pub fn mu_mean(&self) -> f64 {
        self.expect(|t| self.oracle.mu_mean(t))
    }

    pub fn mu_sd(&self) -> f64 {
        let m = self.mu_mean();
        self.expect(|t| self.oracle.mu_sd(t).powi(2) + (self.oracle.mu_mean(t) - m).powi(2))
            .sqrt()
    }

    /// Mode of `p(theta | y)`.
    pub fn theta_map(&self) -> f64 {
        let obj = |u: f64| self.oracle.log_evidence(u.exp()) + self.prior.log_density(u.exp());
        let n = 4000;
        let (a, b) = (self.breaks[0], self.breaks[self.breaks.len() - 1]);
        let grid: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
        let mut best = 0;
        for i in 1..grid.len() {
            if obj(grid[i]) > obj(grid[best]) {
                best = i;
            }
        }
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(n)];
        golden_section_max(obj, lo, hi, 1e-10).exp().clamp(self.prior.support.0, self.prior.support.1)
    }

    /// Total-variation distance to another density on the support.
    pub fn tv_distance<F: Fn(f64) -> f64>(&self, other: F) -> f64 {
        0.5 * integrate_piecewise(
            |u| {
                let th = u.exp();
                (self.theta_density(th) - other(th)).abs() * th
            },
            &self.breaks,
            1e-9,
        )
    }
}
