//! Importance weights, effective sample size and the evidence bookkeeping that
//! goes with them. All weights are held in the log domain.

use crate::error::{Result, SmcError};

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Normalize log-weights with a max shift. Fails when every weight vanishes.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.iter().any(|w| w.is_nan()) {
        return Err(SmcError::ModelEvaluation("NaN log-weight".into()));
    }
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(SmcError::DegeneratePopulation {
            iteration: 0,
            alpha: f64::NAN,
            log_weight_spread: spread(log_w),
            reason: "all importance weights vanished".into(),
        });
    }
    Ok(log_w.iter().map(|w| (w - lse).exp()).collect())
}

pub(crate) fn spread(log_w: &[f64]) -> f64 {
    let finite = log_w.iter().copied().filter(|w| w.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
        (lo.min(w), hi.max(w))
    });
    if hi >= lo {
        hi - lo
    } else {
        f64::NAN
    }
}

/// Effective sample size `1 / sum(W^2)` of normalized weights.
pub fn ess_of_normalized(normalized: &[f64]) -> f64 {
    let s: f64 = normalized.iter().map(|w| w * w).sum();
    let n = normalized.len() as f64;
    (1.0 / s).clamp(1.0, n)
}

/// ESS directly from log-weights.
pub fn ess_from_log(log_w: &[f64]) -> Result<f64> {
    Ok(ess_of_normalized(&normalize_log_weights(log_w)?))
}

/// Weights of a particle population: accumulated log-weights since the last
/// resampling time and their normalized counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    log_unnormalized: Vec<f64>,
    normalized: Vec<f64>,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self {
            log_unnormalized: vec![0.0; n],
            normalized: vec![1.0 / n as f64; n],
        }
    }

    pub fn from_log(log_unnormalized: Vec<f64>) -> Result<Self> {
        let normalized = normalize_log_weights(&log_unnormalized)?;
        Ok(Self {
            log_unnormalized,
            normalized,
        })
    }

    /// Build from non-negative linear weights.
    pub fn from_unnormalized(w: &[f64]) -> Result<Self> {
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(SmcError::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        Self::from_log(w.iter().map(|x| x.ln()).collect())
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn log_unnormalized(&self) -> &[f64] {
        &self.log_unnormalized
    }

    /// Log of the mean accumulated (unnormalized) weight.
    pub fn log_mean(&self) -> f64 {
        log_mean_exp(&self.log_unnormalized)
    }

    pub fn ess(&self) -> f64 {
        ess_of_normalized(&self.normalized)
    }

    /// Multiply every weight by `exp(log_ratio[i])`.
    pub fn multiply(&mut self, log_ratio: &[f64]) -> Result<()> {
        if log_ratio.len() != self.len() {
            return Err(SmcError::InvalidArgument(format!(
                "log_ratio has length {}, expected {}",
                log_ratio.len(),
                self.len()
            )));
        }
        if log_ratio.iter().any(|r| r.is_nan() || *r == f64::INFINITY) {
            return Err(SmcError::ModelEvaluation(
                "incremental log-weight is NaN or +inf".into(),
            ));
        }
        let updated: Vec<f64> = self
            .log_unnormalized
            .iter()
            .zip(log_ratio)
            .map(|(w, r)| w + r)
            .collect();
        self.normalized = normalize_log_weights(&updated)?;
        self.log_unnormalized = updated;
        Ok(())
    }

    pub fn reset(&mut self) {
        let n = self.len();
        *self = Self::uniform(n);
    }
}

/// ESS of a weight vector; errors on an all-zero population.
pub fn ess(weights: &WeightVector) -> Result<f64> {
    if weights.log_unnormalized().iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(SmcError::DegeneratePopulation {
            iteration: 0,
            alpha: f64::NAN,
            log_weight_spread: f64::NAN,
            reason: "all weights are zero".into(),
        });
    }
    Ok(weights.ess())
}
