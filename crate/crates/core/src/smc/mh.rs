//! Metropolis-Hastings building blocks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SmcError};

/// Accept/reject given current and proposed log-targets and the proposal
/// correction `log q(x | x') - log q(x' | x)`. A `-inf` proposal is rejected.
pub fn mh_accept<R: Rng + ?Sized>(
    current: f64,
    proposed: f64,
    log_q_correction: f64,
    rng: &mut R,
) -> Result<bool> {
    if proposed.is_nan() || current.is_nan() || log_q_correction.is_nan() {
        return Err(SmcError::ModelEvaluation("log-target is NaN".into()));
    }
    if proposed == f64::NEG_INFINITY {
        return Ok(false);
    }
    let log_ratio = proposed - current + log_q_correction;
    if log_ratio >= 0.0 {
        return Ok(true);
    }
    let u: f64 = rng.random();
    Ok(u.ln() < log_ratio)
}

/// Proposal kernels for real-valued coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    /// Propose the current point again.
    Identity,
    GaussianRandomWalk { scale: f64 },
}

impl Proposal {
    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        match *self {
            Proposal::Identity => x.to_vec(),
            Proposal::GaussianRandomWalk { scale } => x
                .iter()
                .map(|xi| {
                    let z: f64 = StandardNormal.sample(rng);
                    xi + scale * z
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhStep {
    pub state: Vec<f64>,
    pub log_target: f64,
    pub accepted: bool,
}

/// One Metropolis-Hastings step with a symmetric proposal on `R^d`.
pub fn mh_move<R, F>(
    state: &[f64],
    log_target: f64,
    target: F,
    kernel: &Proposal,
    rng: &mut R,
) -> Result<MhStep>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let proposal = kernel.propose(state, rng);
    let proposed = target(&proposal);
    if mh_accept(log_target, proposed, 0.0, rng)? {
        Ok(MhStep {
            state: proposal,
            log_target: proposed,
            accepted: true,
        })
    } else {
        Ok(MhStep {
            state: state.to_vec(),
            log_target,
            accepted: false,
        })
    }
}
