use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::hyper::ledger::EvidenceLedger;
use crate::hyper::numeric::{golden_section_max, integrate_piecewise, Pchip};
use crate::hyper::prior::HyperPrior;

const QUAD_REL_TOL: f64 = 1e-8;
/// Golden-section tolerance in `ln theta`, i.e. relative in `theta`.
const MAP_LOG_TOL: f64 = 1e-8;

/// Interpolated marginal posterior `p(theta | y)` on the prior support.
#[derive(Debug, Clone)]
pub struct HyperPosterior {
    /// `ln p^theta(y) - shift` as a function of `ln theta`.
    interp: Pchip,
    shift: f64,
    pub prior: HyperPrior,
    /// `ln int p^theta(y) p(theta) dtheta`, including the shift.
    pub log_norm: f64,
}

fn log_breaks(knots: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut v = vec![a];
    v.extend(knots.iter().copied().filter(|&u| u > a && u < b));
    v.push(b);
    v
}

pub fn hyper_posterior(ledger: &EvidenceLedger, prior: &HyperPrior) -> Result<HyperPosterior> {
    let mut pts: Vec<(f64, f64)> = ledger
        .entries
        .iter()
        .map(|e| (e.theta.ln(), e.log_evidence))
        .collect();
    pts.reverse();
    let shift = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let interp = Pchip::new(
        pts.iter().map(|p| p.0).collect(),
        pts.iter().map(|p| p.1 - shift).collect(),
    )?;
    HyperPosterior::from_parts(interp, shift, *prior)
}

impl HyperPosterior {
    fn from_parts(interp: Pchip, shift: f64, prior: HyperPrior) -> Result<Self> {
        let (a, b) = interp.domain();
        let (lo, hi) = prior.support;
        // knots come from `theta_star / sqrt(alpha)`; allow rounding at the ends
        let slack = 1e-12;
        if lo.ln() < a - slack || hi.ln() > b + slack {
            return Err(SmcError::SupportViolation {
                min: a.exp(),
                max: b.exp(),
                lo,
                hi,
            });
        }
        let mut post = Self { interp, shift, prior, log_norm: 0.0 };
        let breaks = log_breaks(post.interp.knots().0, lo, hi);
        let m = breaks
            .iter()
            .map(|&u| post.log_unnormalized(u.exp()) + u)
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(SmcError::ModelEvaluation("posterior vanishes on the prior support".into()));
        }
        let z = integrate_piecewise(|u| (post.log_unnormalized(u.exp()) + u - m).exp(), &breaks, QUAD_REL_TOL);
        post.log_norm = m + z.ln() + shift;
        Ok(post)
    }

    /// The same evidence curve under another hyper-prior; no model evaluations.
    pub fn with_prior(&self, prior: &HyperPrior) -> Result<Self> {
        Self::from_parts(self.interp.clone(), self.shift, *prior)
    }

    fn log_unnormalized(&self, theta: f64) -> f64 {
        let lp = self.prior.log_density(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        self.interp.eval(theta.ln()) + lp
    }

    /// Interpolated `ln p^theta(y)`.
    pub fn log_evidence(&self, theta: f64) -> f64 {
        self.interp.eval(theta.ln()) + self.shift
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        self.log_unnormalized(theta) + self.shift - self.log_norm
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.log_density(theta).exp()
    }

    fn breaks(&self) -> Vec<f64> {
        log_breaks(self.interp.knots().0, self.prior.support.0, self.prior.support.1)
    }

    /// `int f(theta) p(theta | y) dtheta` by adaptive quadrature.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        integrate_piecewise(
            |u| {
                let th = u.exp();
                f(th) * (self.log_density(th) + u).exp()
            },
            &self.breaks(),
            QUAD_REL_TOL,
        )
    }

    pub fn posterior_mean(&self) -> f64 {
        self.expectation(|t| t)
    }

    /// Maximizer of the posterior density on the support.
    pub fn map(&self) -> f64 {
        let breaks = self.breaks();
        // scan knots and midpoints, then polish inside the neighboring bracket
        let mut grid = Vec::with_capacity(2 * breaks.len());
        for w in breaks.windows(2) {
            grid.push(w[0]);
            grid.push(0.5 * (w[0] + w[1]));
        }
        grid.push(breaks[breaks.len() - 1]);
        let obj = |u: f64| self.log_unnormalized(u.exp());
        let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
        for (i, &u) in grid.iter().enumerate() {
            let v = obj(u);
            if v > best_v {
                (best, best_v) = (i, v);
            }
        }
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(grid.len() - 1)];
        let u = golden_section_max(obj, a, b, MAP_LOG_TOL);
        let cand = if obj(u) >= best_v { u } else { grid[best] };
        cand.exp().clamp(self.prior.support.0, self.prior.support.1)
    }

    /// `(theta, density)` at `n` log-spaced points across the support.
    pub fn curve(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.prior.support;
        let (a, b) = (lo.ln(), hi.ln());
        (0..n)
            .map(|i| {
                let th = match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                };
                (th, self.density(th))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbSelection {
    pub theta: f64,
    /// Interpolated `ln p^theta(y)` at the selected value.
    pub log_evidence: f64,
}

/// Empirical-Bayes noise level: the maximizer of the interpolated posterior.
pub fn eb_select(posterior: &HyperPosterior) -> Result<EbSelection> {
    let theta = posterior.map();
    let log_evidence = posterior.log_evidence(theta);
    if !(theta.is_finite() && log_evidence.is_finite()) {
        return Err(SmcError::ModelEvaluation(format!("non-finite EB objective at {theta}")));
    }
    Ok(EbSelection { theta, log_evidence })
}

/// Index of the last knot strictly above `theta_bar`; `thetas` must decrease.
pub fn anchor_iteration(thetas: &[f64], theta_bar: f64) -> Result<usize> {
    let k = thetas.partition_point(|&t| t > theta_bar);
    if k == 0 {
        return Err(SmcError::InvalidArgument(format!(
            "selected theta {theta_bar} is not below any ledger knot"
        )));
    }
    Ok(k - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimates {
    pub map: f64,
    pub posterior_mean: f64,
}

pub fn theta_estimators(posterior: &HyperPosterior) -> ThetaEstimates {
    ThetaEstimates { map: posterior.map(), posterior_mean: posterior.posterior_mean() }
}
