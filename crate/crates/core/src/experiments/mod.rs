//! The toy and source-localization studies: baselines, the proposed analysis,
//! error metrics and the replicate driver.

pub mod clg;
pub mod dipoles;
pub mod oracle;
pub mod ospa;
pub mod proposed;
pub mod study;
pub mod theta_walk;
pub mod timing;
pub mod toy;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hyper::prior::HyperPrior;
use crate::smc::schedule::alpha1_for_theta_max;
use crate::smc::{SamplerConfig, SnapshotPolicy, TemperingSchedule};

pub use dipoles::{dipole_count_pmf, dipole_estimators, weighted_kmeans, DipoleEstimate};
pub use oracle::{ToyJointOracle, ToyOracle};
pub use ospa::ospa;
pub use study::{run_study, StudyModel, StudyOutcome, StudySpec};
pub use timing::Stopwatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    PropEB,
    PropFB,
    BaselineEB,
    BaselineFB,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::PropEB, Method::PropFB, Method::BaselineEB, Method::BaselineFB];

    pub fn name(&self) -> &'static str {
        match self {
            Method::PropEB => "PropEB",
            Method::PropFB => "PropFB",
            Method::BaselineEB => "BaselineEB",
            Method::BaselineFB => "BaselineFB",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sampler settings shared by every method of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcSettings {
    pub n_particles: usize,
    pub iterations: usize,
    pub theta_star: f64,
    /// Noise level reached at the first tempered iteration.
    pub theta_max: f64,
    pub resample_threshold: f64,
    pub threads: usize,
}

impl SmcSettings {
    pub fn toy() -> Self {
        Self { n_particles: 100, iterations: 500, theta_star: 0.05, theta_max: 10.0, resample_threshold: 0.5, threads: 1 }
    }

    pub fn clg() -> Self {
        Self { n_particles: 100, iterations: 100, theta_star: 0.025, theta_max: 1.0, resample_threshold: 0.5, threads: 1 }
    }

    pub fn default_prior(&self) -> Result<HyperPrior> {
        HyperPrior::default_gamma(self.theta_star, self.theta_max)
    }

    /// Geometric ladder from `theta_max` down to `theta_star`.
    pub fn sampler_config(&self, seed: u64, theta_star: f64, snapshots: SnapshotPolicy) -> Result<SamplerConfig> {
        let alpha1 = alpha1_for_theta_max(theta_star, self.theta_max).min(1.0);
        let schedule = TemperingSchedule::geometric(alpha1, self.iterations)?;
        let mut cfg = SamplerConfig::new(self.n_particles, schedule, seed, theta_star);
        cfg.resample_threshold = self.resample_threshold;
        cfg.threads = self.threads;
        cfg.snapshots = snapshots;
        Ok(cfg)
    }
}

/// Point estimates of the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamEstimate {
    Mu { map: f64, posterior_mean: f64 },
    Dipoles(DipoleEstimate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub theta_map: f64,
    pub theta_pm: f64,
    pub estimate: ParamEstimate,
    /// Inference CPU time, including the shared sampling run for the
    /// proposed methods.
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    /// Likelihood evaluations charged to this method.
    pub evaluations: u64,
}
