//! Sampling the noise level as an ordinary parameter, for the baseline
//! Fully-Bayesian samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::Result;
use crate::hyper::prior::{HyperPrior, PriorFamily};
use crate::rng::StreamRng;
use crate::smc::mh::mh_accept;

/// Draw from the hyper-prior restricted to its support.
pub fn sample_hyper_prior(prior: &HyperPrior, rng: &mut StreamRng) -> f64 {
    let (lo, hi) = prior.support;
    match prior.family {
        PriorFamily::Gamma { shape, scale } => {
            let g = Gamma::new(shape, scale).expect("validated gamma parameters");
            loop {
                let v = g.sample(rng);
                if prior.contains(v) {
                    return v;
                }
            }
        }
        PriorFamily::Uniform => lo + (hi - lo) * rng.random::<f64>(),
        PriorFamily::LogUniform => (lo.ln() + (hi / lo).ln() * rng.random::<f64>()).exp(),
    }
}

/// Random-walk step on `ln theta` for the current population.
pub fn log_theta_step(thetas: impl Iterator<Item = f64>, weights: &[f64]) -> f64 {
    let logs: Vec<f64> = thetas.map(f64::ln).collect();
    let mean: f64 = logs.iter().zip(weights).map(|(x, w)| x * w).sum();
    let var: f64 = logs.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
    (2.38 * var.sqrt()).clamp(0.01, 1.0)
}

/// Metropolis-Hastings move on `ln theta`. `log_lik` evaluates the tempered
/// likelihood term at a proposed value; `cur_log_lik` is updated on acceptance.
pub fn theta_move<F>(
    theta: &mut f64,
    cur_log_lik: &mut f64,
    step: f64,
    prior: &HyperPrior,
    log_lik: F,
    rng: &mut StreamRng,
) -> Result<bool>
where
    F: FnOnce(f64) -> f64,
{
    let z: f64 = StandardNormal.sample(rng);
    let prop = *theta * (step * z).exp();
    if !prior.contains(prop) {
        let _: f64 = rng.random();
        return Ok(false);
    }
    let ll = log_lik(prop);
    let cur = prior.log_density(*theta) + *cur_log_lik;
    let new = prior.log_density(prop) + ll;
    // Jacobian of the log-scale walk
    let corr = prop.ln() - theta.ln();
    if mh_accept(cur, new, corr, rng)? {
        *theta = prop;
        *cur_log_lik = ll;
        Ok(true)
    } else {
        Ok(false)
    }
}
