use crate::error::{Result, SmcError};
use crate::smc::weights::{ess_of_normalized, log_sum_exp, normalize_log_weights};
use crate::smc::{RunTrace, TemperedModel};

/// Below this effective sample size a reweighted sample is flagged.
pub const MIN_REWEIGHT_ESS: f64 = 5.0;

/// A weighted particle sample targeting the posterior at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub theta: f64,
    pub alpha: f64,
    pub coords: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Cached log-likelihoods at `alpha`.
    pub log_likelihoods: Vec<f64>,
    pub ess: f64,
    pub degenerate: bool,
}

impl WeightedSample {
    /// Stored snapshot of iteration `t`, as is.
    pub fn from_trace(trace: &RunTrace, t: usize) -> Result<Self> {
        let snap = trace.snapshot(t)?;
        let rec = &trace.records[t];
        let theta = rec
            .theta
            .ok_or_else(|| SmcError::InvalidArgument(format!("iteration {t} is untempered")))?;
        let ess = ess_of_normalized(&snap.weights);
        Ok(Self {
            theta,
            alpha: rec.alpha,
            coords: snap.states.clone(),
            weights: snap.weights.clone(),
            log_likelihoods: snap.log_likelihoods.clone(),
            ess,
            degenerate: ess < MIN_REWEIGHT_ESS,
        })
    }

    /// Importance-reweight to the posterior at `theta`. Also returns
    /// `ln sum_n W_n p^theta(y|x_n) / p^theta_t(y|x_n)`, the log evidence ratio.
    pub fn retarget<M: TemperedModel>(&self, model: &M, theta: f64) -> Result<(Self, f64)> {
        let alpha = model
            .alpha_of_theta(theta)
            .ok_or_else(|| SmcError::Domain(format!("no exponent for theta = {theta}")))?;
        let mut lls = Vec::with_capacity(self.coords.len());
        let mut logw = Vec::with_capacity(self.coords.len());
        for ((c, &w), &ll) in self.coords.iter().zip(&self.weights).zip(&self.log_likelihoods) {
            let state = model.from_coords(c)?;
            let new = model.log_likelihood_from(&state, ll, self.alpha, alpha);
            lls.push(new);
            logw.push(w.ln() + (new - ll));
        }
        let ratio = log_sum_exp(&logw);
        let weights = normalize_log_weights(&logw)?;
        let ess = ess_of_normalized(&weights);
        Ok((
            Self {
                theta,
                alpha,
                coords: self.coords.clone(),
                weights,
                log_likelihoods: lls,
                ess,
                degenerate: ess < MIN_REWEIGHT_ESS,
            },
            ratio,
        ))
    }

    pub fn mean_of<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.coords.iter().zip(&self.weights).map(|(c, w)| w * f(c)).sum()
    }
}

/// Weighted sample approximating `p^theta(x | y)`, obtained by importance
/// sampling from the snapshot of iteration `t`.
pub fn reweight_to_theta<M: TemperedModel>(trace: &RunTrace, t: usize, theta: f64, model: &M) -> Result<WeightedSample> {
    Ok(WeightedSample::from_trace(trace, t)?.retarget(model, theta)?.0)
}

/// Importance-sampling estimate of `ln p^theta(y)` from the snapshot of iteration `t`.
pub fn is_log_evidence<M: TemperedModel>(trace: &RunTrace, t: usize, theta: f64, model: &M) -> Result<f64> {
    let base = WeightedSample::from_trace(trace, t)?;
    let (_, ratio) = base.retarget(model, theta)?;
    Ok(trace.records[t].log_evidence + ratio)
}
