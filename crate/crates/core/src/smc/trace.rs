//! Run traces and their JSON form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::smc::schedule::TemperingSchedule;

pub const SCHEMA_VERSION: &str = "1";

/// Stored particle states with their normalized weights and tempered
/// log-likelihoods at the iteration's exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub states: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub log_likelihoods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub alpha: f64,
    /// `None` at `alpha = 0`, where the hyper-parameter is infinite.
    pub theta: Option<f64>,
    pub ess: f64,
    pub resampled: bool,
    pub log_evidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "every")]
pub enum SnapshotPolicy {
    All,
    /// Every k-th iteration plus the last one.
    Every(usize),
    LastOnly,
    Nothing,
}

impl Default for SnapshotPolicy {
    fn default() -> Self {
        SnapshotPolicy::All
    }
}

impl SnapshotPolicy {
    pub fn keeps(&self, t: usize, last: bool) -> bool {
        match *self {
            SnapshotPolicy::All => true,
            SnapshotPolicy::Every(k) => last || (k > 0 && t % k == 0),
            SnapshotPolicy::LastOnly => last,
            SnapshotPolicy::Nothing => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSettings {
    pub model: String,
    pub n_particles: usize,
    pub seed: u64,
    pub theta_star: f64,
    pub schedule: TemperingSchedule,
    pub resample_threshold: f64,
    pub mcmc_sweeps: usize,
    pub snapshots: SnapshotPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema_version: String,
    pub settings: TraceSettings,
    pub records: Vec<IterationRecord>,
}

impl RunTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace has at least the initial record")
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }

    pub fn snapshot(&self, t: usize) -> Result<&Snapshot> {
        let rec = self.records.get(t).ok_or(SmcError::OutOfRange {
            index: t,
            len: self.records.len(),
        })?;
        rec.snapshot.as_ref().ok_or(SmcError::MissingSnapshot(t))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let trace: RunTrace = serde_json::from_str(s)?;
        trace.validate()?;
        Ok(trace)
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let trace: RunTrace = serde_json::from_reader(r)?;
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SmcError::InvalidArgument(format!(
                "unsupported trace schema version {:?}",
                self.schema_version
            )));
        }
        if self.records.is_empty() {
            return Err(SmcError::Empty("trace has no records".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.t != i {
                return Err(SmcError::InvalidArgument(format!(
                    "record {i} carries t = {}",
                    r.t
                )));
            }
        }
        Ok(())
    }
}

/// `log p^{theta(t)}(y)` as accumulated by the sampler up to iteration `t`.
pub fn evidence_estimate(trace: &RunTrace, t: usize) -> Result<f64> {
    trace
        .records
        .get(t)
        .map(|r| r.log_evidence)
        .ok_or(SmcError::OutOfRange {
            index: t,
            len: trace.records.len(),
        })
}
