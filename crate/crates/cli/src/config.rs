//! Effective configuration: defaults for the model, then the config file, then
//! command-line flags, each layer merged key by key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use hypersmc::experiments::{SmcSettings, StudyModel};
use hypersmc::hyper::HyperPrior;
use hypersmc::models::source::ClgModelConfig;
use hypersmc::smc::schedule::alpha1_for_theta_max;
use hypersmc::smc::{SamplerConfig, SnapshotPolicy, TemperingSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Geometric,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: ScheduleKind,
    /// First exponent of the geometric ladder; derived from `theta_max` when absent.
    pub alpha1: Option<f64>,
    pub ess_target_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: StudyModel,
    pub n_particles: usize,
    pub n_iterations: usize,
    pub schedule: ScheduleConfig,
    pub resample_threshold_fraction: f64,
    pub theta_star: f64,
    /// Noise level at the first tempered iteration of the geometric ladder.
    pub theta_max: f64,
    /// Prior used by `analyze --config`; `Gamma(2, 4 theta_star)` on
    /// `[theta_star, theta_max]` when absent.
    pub hyper_prior: Option<HyperPrior>,
    pub seed: u64,
    pub snapshots: SnapshotPolicy,
    pub mcmc_sweeps: usize,
    pub threads: usize,
    pub clg_model: ClgModelConfig,
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(model: StudyModel) -> Self {
        let s = match model {
            StudyModel::Toy => SmcSettings::toy(),
            StudyModel::Clg => SmcSettings::clg(),
        };
        Self {
            model,
            n_particles: s.n_particles,
            n_iterations: s.iterations,
            schedule: ScheduleConfig { mode: ScheduleKind::Geometric, alpha1: None, ess_target_fraction: 0.9 },
            resample_threshold_fraction: s.resample_threshold,
            theta_star: s.theta_star,
            theta_max: s.theta_max,
            hyper_prior: None,
            seed: 1,
            snapshots: SnapshotPolicy::All,
            mcmc_sweeps: 1,
            threads: 1,
            clg_model: ClgModelConfig { theta_star: s.theta_star, ..ClgModelConfig::default() },
            data: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            bail!("n_particles: need at least 2, got {}", self.n_particles);
        }
        if self.n_iterations == 0 && self.schedule.mode == ScheduleKind::Geometric {
            bail!("n_iterations: must be positive");
        }
        if !(self.resample_threshold_fraction > 0.0 && self.resample_threshold_fraction <= 1.0) {
            bail!("resample_threshold_fraction: must lie in (0, 1], got {}", self.resample_threshold_fraction);
        }
        if !(self.theta_star > 0.0) {
            bail!("theta_star: must be positive, got {}", self.theta_star);
        }
        if !(self.theta_max >= self.theta_star) {
            bail!("theta_max: must be at least theta_star");
        }
        if let Some(a) = self.schedule.alpha1 {
            if !(a > 0.0 && a <= 1.0) {
                bail!("schedule.alpha1: must lie in (0, 1], got {a}");
            }
        }
        let f = self.schedule.ess_target_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("schedule.ess_target_fraction: must lie in (0, 1), got {f}");
        }
        if self.mcmc_sweeps == 0 {
            bail!("mcmc_sweeps: must be positive");
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let schedule = match self.schedule.mode {
            ScheduleKind::Geometric => {
                let a1 = self
                    .schedule
                    .alpha1
                    .unwrap_or_else(|| alpha1_for_theta_max(self.theta_star, self.theta_max).min(1.0));
                TemperingSchedule::geometric(a1, self.n_iterations)?
            }
            ScheduleKind::Adaptive => TemperingSchedule::adaptive(self.schedule.ess_target_fraction)?,
        };
        let mut cfg = SamplerConfig::new(self.n_particles, schedule, self.seed, self.theta_star);
        cfg.resample_threshold = self.resample_threshold_fraction;
        cfg.mcmc_sweeps = self.mcmc_sweeps;
        cfg.snapshots = self.snapshots;
        cfg.threads = self.threads;
        Ok(cfg)
    }
}

/// Recursive merge; scalars and arrays in `top` replace those in `base`.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set `a.b.c` in a JSON object, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, v: Value) {
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(p) = parts.next() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().expect("object");
        if parts.peek().is_none() {
            obj.insert(p.to_string(), v);
            return;
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

pub fn read_json_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Model named by the flag, else by the file, else the toy model.
pub fn model_of(flag: Option<StudyModel>, file: Option<&Value>) -> Result<StudyModel> {
    if let Some(m) = flag {
        return Ok(m);
    }
    match file.and_then(|v| v.get("model")) {
        Some(m) => serde_json::from_value(m.clone()).context("model: expected \"toy\" or \"clg\""),
        None => Ok(StudyModel::Toy),
    }
}

/// Resolve the layers into a typed config, reporting the offending field.
pub fn resolve<T: Serialize + for<'de> Deserialize<'de>>(defaults: &T, file: Option<Value>, flags: Value) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, flags);
    serde_json::from_value(v).map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))
}
