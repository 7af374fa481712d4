use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::hyper::numeric::trapezoid_weights;
use crate::hyper::prior::HyperPrior;
use crate::hyper::stats::{kde_mode, weighted_quantile};
use crate::smc::weights::log_sum_exp;
use crate::smc::{RunTrace, Snapshot};

/// Contribution of one iteration to the recycled posterior: particle `n`
/// carries `mass * W_n^(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecycledIteration {
    pub t: usize,
    pub theta: f64,
    pub g: f64,
    pub mass: f64,
}

/// Fully-Bayesian posterior assembled from the particles of every iteration
/// whose noise level lies in the prior support.
#[derive(Debug, Clone)]
pub struct RecycledPosterior<'a> {
    trace: &'a RunTrace,
    pub prior: HyperPrior,
    pub iterations: Vec<RecycledIteration>,
}

pub fn fb_average<'a>(trace: &'a RunTrace, prior: &HyperPrior) -> Result<RecycledPosterior<'a>> {
    let recs: Vec<_> = trace
        .records
        .iter()
        .filter(|r| r.alpha > 0.0)
        .filter(|r| r.theta.is_some_and(|th| prior.contains(th)))
        .collect();
    if recs.is_empty() {
        return Err(SmcError::Empty(format!(
            "no iteration with theta inside [{}, {}]",
            prior.support.0, prior.support.1
        )));
    }
    for r in &recs {
        if r.snapshot.is_none() {
            return Err(SmcError::MissingSnapshot(r.t));
        }
    }
    let thetas: Vec<f64> = recs.iter().map(|r| r.theta.unwrap_or(f64::NAN)).collect();
    let g = if thetas.len() == 1 { vec![1.0] } else { trapezoid_weights(&thetas)? };
    let log_mass: Vec<f64> = recs
        .iter()
        .zip(&thetas)
        .zip(&g)
        .map(|((r, &th), &gt)| r.log_evidence + prior.log_density(th) + gt.ln())
        .collect();
    let z = log_sum_exp(&log_mass);
    if !z.is_finite() {
        return Err(SmcError::ModelEvaluation("recycled weights do not normalize".into()));
    }
    let iterations = recs
        .iter()
        .zip(&thetas)
        .zip(&g)
        .zip(&log_mass)
        .map(|(((r, &theta), &g), &lm)| RecycledIteration { t: r.t, theta, g, mass: (lm - z).exp() })
        .collect();
    Ok(RecycledPosterior { trace, prior: *prior, iterations })
}

/// The recycled posterior under another hyper-prior, from stored quantities only.
pub fn sensitivity_reweight<'a>(recycled: &RecycledPosterior<'a>, prior: &HyperPrior) -> Result<RecycledPosterior<'a>> {
    fb_average(recycled.trace, prior)
}

impl<'a> RecycledPosterior<'a> {
    fn snapshot(&self, t: usize) -> &'a Snapshot {
        // presence checked at construction
        self.trace.records[t].snapshot.as_ref().expect("snapshot")
    }

    /// Number of weighted particles that enter the average.
    pub fn n_samples(&self) -> usize {
        self.iterations.iter().map(|it| self.snapshot(it.t).weights.len()).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.iterations
            .iter()
            .map(|it| it.mass * self.snapshot(it.t).weights.iter().sum::<f64>())
            .sum()
    }

    /// `(theta_t, mass_t)` per contributing iteration.
    pub fn theta_marginal(&self) -> Vec<(f64, f64)> {
        self.iterations.iter().map(|it| (it.theta, it.mass)).collect()
    }

    pub fn theta_mean(&self) -> f64 {
        self.iterations.iter().map(|it| it.theta * it.mass).sum()
    }

    /// All `(coords, omega)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (&'a [f64], f64)> + Clone + '_ {
        self.iterations.iter().flat_map(move |it| {
            let s = self.snapshot(it.t);
            s.states.iter().zip(&s.weights).map(move |(c, w)| (c.as_slice(), it.mass * w))
        })
    }

    pub fn mean_of<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.samples().map(|(c, w)| w * f(c)).sum()
    }

    /// `(f(x), omega)` for every sample, as two columns.
    pub fn values<F: Fn(&[f64]) -> f64>(&self, f: F) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_samples();
        let (mut v, mut w) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for it in &self.iterations {
            let s = self.snapshot(it.t);
            for (c, wt) in s.states.iter().zip(&s.weights) {
                v.push(f(c));
                w.push(it.mass * wt);
            }
        }
        (v, w)
    }

    pub fn quantile_of<F: Fn(&[f64]) -> f64>(&self, f: F, q: f64) -> Result<f64> {
        let (v, w) = self.values(f);
        weighted_quantile(&v, &w, q)
    }

    /// Mode of the weighted kernel density of `f(x)`.
    pub fn map_of<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<f64> {
        let (v, w) = self.values(f);
        kde_mode(&v, &w)
    }
}
