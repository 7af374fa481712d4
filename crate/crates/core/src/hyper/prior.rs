use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SmcError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum PriorFamily {
    /// Shape–scale parameterization.
    Gamma { shape: f64, scale: f64 },
    Uniform,
    LogUniform,
}

/// Hyper-prior on the noise level, treated as zero outside `support`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    #[serde(flatten)]
    pub family: PriorFamily,
    pub support: (f64, f64),
}

impl HyperPrior {
    pub fn new(family: PriorFamily, support: (f64, f64)) -> Result<Self> {
        let (lo, hi) = support;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(SmcError::InvalidArgument(format!("bad prior support [{lo}, {hi}]")));
        }
        if let PriorFamily::Gamma { shape, scale } = family {
            if !(shape > 0.0 && scale > 0.0) {
                return Err(SmcError::InvalidArgument(format!("gamma(shape {shape}, scale {scale})")));
            }
        }
        Ok(Self { family, support })
    }

    /// `Gamma(2, 4 theta_star)` on `[theta_star, theta_max]`.
    pub fn default_gamma(theta_star: f64, theta_max: f64) -> Result<Self> {
        Self::new(PriorFamily::Gamma { shape: 2.0, scale: 4.0 * theta_star }, (theta_star, theta_max))
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.support.0 && theta <= self.support.1
    }

    /// Log-density of the untruncated family; `-inf` outside the support.
    pub fn log_density(&self, theta: f64) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        let (lo, hi) = self.support;
        match self.family {
            PriorFamily::Gamma { shape, scale } => {
                (shape - 1.0) * theta.ln() - theta / scale - ln_gamma(shape) - shape * scale.ln()
            }
            PriorFamily::Uniform => -(hi - lo).ln(),
            PriorFamily::LogUniform => -theta.ln() - (hi / lo).ln().ln(),
        }
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.log_density(theta).exp()
    }
}
