//! Tempering exponent ladders.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::smc::weights::ess_from_log;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    FixedGeometric,
    Explicit,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    pub mode: ScheduleMode,
    /// `alpha_0 .. alpha_T`; empty for adaptive schedules until a run fills it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exponents: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess_target_fraction: Option<f64>,
    /// Safety cap on the number of adaptive steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

/// First exponent that makes `theta_star / sqrt(alpha_1)` reach `theta_max`.
pub fn alpha1_for_theta_max(theta_star: f64, theta_max: f64) -> f64 {
    (theta_star / theta_max).powi(2)
}

impl TemperingSchedule {
    /// `alpha_0 = 0` and `alpha_t = alpha_1 * (1/alpha_1)^((t-1)/(T-1))` for `t = 1..T`.
    pub fn geometric(alpha1: f64, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(SmcError::InvalidArgument("at least one iteration".into()));
        }
        if !(alpha1 > 0.0 && alpha1 <= 1.0) {
            return Err(SmcError::InvalidArgument(format!(
                "alpha_1 must lie in (0, 1], got {alpha1}"
            )));
        }
        if iterations == 1 {
            return Self::explicit(vec![0.0, 1.0]);
        }
        if alpha1 >= 1.0 {
            return Err(SmcError::InvalidArgument(
                "alpha_1 = 1 leaves no room for further steps".into(),
            ));
        }
        let span = (iterations - 1) as f64;
        let log_a1 = alpha1.ln();
        let mut exponents = Vec::with_capacity(iterations + 1);
        exponents.push(0.0);
        for t in 1..=iterations {
            let frac = (t - 1) as f64 / span;
            exponents.push((log_a1 * (1.0 - frac)).exp());
        }
        exponents[iterations] = 1.0;
        let mut s = Self::explicit(exponents)?;
        s.mode = ScheduleMode::FixedGeometric;
        Ok(s)
    }

    pub fn explicit(exponents: Vec<f64>) -> Result<Self> {
        validate_exponents(&exponents)?;
        Ok(Self {
            mode: ScheduleMode::Explicit,
            exponents,
            ess_target_fraction: None,
            max_iterations: None,
        })
    }

    pub fn adaptive(ess_target_fraction: f64) -> Result<Self> {
        if !(ess_target_fraction > 0.0 && ess_target_fraction < 1.0) {
            return Err(SmcError::InvalidArgument(format!(
                "ESS target fraction must lie in (0, 1), got {ess_target_fraction}"
            )));
        }
        Ok(Self {
            mode: ScheduleMode::Adaptive,
            exponents: Vec::new(),
            ess_target_fraction: Some(ess_target_fraction),
            max_iterations: Some(100_000),
        })
    }

    pub fn is_adaptive(&self) -> bool {
        self.mode == ScheduleMode::Adaptive
    }

    pub fn iterations(&self) -> Option<usize> {
        (!self.is_adaptive()).then(|| self.exponents.len() - 1)
    }
}

pub fn validate_exponents(exponents: &[f64]) -> Result<()> {
    if exponents.len() < 2 {
        return Err(SmcError::InvalidArgument(
            "a schedule needs alpha_0 and alpha_T".into(),
        ));
    }
    if exponents[0] != 0.0 {
        return Err(SmcError::InvalidArgument("alpha_0 must be 0".into()));
    }
    if *exponents.last().unwrap() != 1.0 {
        return Err(SmcError::InvalidArgument("alpha_T must be 1".into()));
    }
    if exponents.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SmcError::InvalidArgument(
            "exponents must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Choose the next exponent by bisection so that the ESS after reweighting is
/// `target_fraction` times the current ESS.
///
/// `log_weights` are the current accumulated log-weights and `increment(a)`
/// returns the incremental log-weights for a step from `alpha` to `a`.
pub fn next_exponent_adaptive<F>(
    log_weights: &[f64],
    alpha: f64,
    target_fraction: f64,
    mut increment: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if !(alpha < 1.0) {
        return Err(SmcError::InvalidArgument(format!(
            "current exponent must be below 1, got {alpha}"
        )));
    }
    let current = ess_from_log(log_weights)?;
    let target = target_fraction * current;
    let mut ess_at = |a: f64| -> Result<f64> {
        let inc = increment(a)?;
        let combined: Vec<f64> = log_weights.iter().zip(&inc).map(|(w, r)| w + r).collect();
        match ess_from_log(&combined) {
            Ok(e) => Ok(e),
            Err(SmcError::DegeneratePopulation { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    };
    if ess_at(1.0)? >= target {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (alpha, 1.0);
    for _ in 0..50 {
        if hi - lo < 1e-8 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ess_at(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_ladder_shape() {
        let s = TemperingSchedule::geometric(1e-4, 50).unwrap();
        assert_eq!(s.exponents.len(), 51);
        assert_eq!(s.exponents[0], 0.0);
        assert!((s.exponents[1] - 1e-4).abs() < 1e-18);
        assert_eq!(s.exponents[50], 1.0);
        let ratios: Vec<f64> = s.exponents[1..].windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-9 * ratios[0]);
        }
    }

    #[test]
    fn single_step_schedule() {
        let s = TemperingSchedule::geometric(0.3, 1).unwrap();
        assert_eq!(s.exponents, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_non_monotone() {
        assert!(TemperingSchedule::explicit(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TemperingSchedule::explicit(vec![0.1, 1.0]).is_err());
        assert!(TemperingSchedule::explicit(vec![0.0, 0.9]).is_err());
    }

    #[test]
    fn flat_likelihood_takes_full_step() {
        let a = next_exponent_adaptive(&[0.0; 4], 0.2, 0.5, |_| Ok(vec![0.0; 4])).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn fraction_near_one_gives_tiny_step() {
        let v = [1.0, 0.0, -2.0, 3.0];
        let a = next_exponent_adaptive(&[0.0; 4], 0.3, 1.0 - 1e-12, |a| {
            Ok(v.iter().map(|x| (a - 0.3) * 100.0 * x).collect())
        })
        .unwrap();
        assert!(a > 0.3 && a - 0.3 < 1e-6);
    }

    #[test]
    fn step_shrinks_as_fraction_grows() {
        let v = [1.0, 0.0, -2.0, 3.0, 0.5];
        let step = |f: f64| {
            next_exponent_adaptive(&[0.0; 5], 0.0, f, |a| Ok(v.iter().map(|x| a * 10.0 * x).collect()))
                .unwrap()
        };
        assert!(step(0.9) < step(0.5));
        assert!(step(0.5) < step(0.2));
    }

    #[test]
    fn two_particle_closed_form() {
        // likelihoods (e, 1): weights after a step da are proportional to (e^da, 1).
        // ESS = 1 / (p^2 + (1-p)^2) with p = e^da / (e^da + 1); solve ESS = 2 f.
        let f: f64 = 0.9;
        // p^2 + (1-p)^2 = 1/(2f)  =>  p = (1 + sqrt(1/f - 1)) / 2
        let p = 0.5 * (1.0 + (1.0 / f - 1.0).sqrt());
        let expected = (p / (1.0 - p)).ln();
        let a = next_exponent_adaptive(&[0.0, 0.0], 0.0, f, |a| Ok(vec![a * 1.0, 0.0])).unwrap();
        assert!(expected < 1.0);
        assert!((a - expected).abs() < 1e-7, "{a} vs {expected}");
    }
}
