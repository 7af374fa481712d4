use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::smc::RunTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t: usize,
    pub theta: f64,
    pub log_evidence: f64,
}

/// Evidence estimates `log p^theta(y)` at the noise level of every tempered
/// iteration, in iteration order (so `theta` decreases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLedger {
    pub theta_star: f64,
    pub entries: Vec<LedgerEntry>,
}

pub fn build_ledger(trace: &RunTrace) -> Result<EvidenceLedger> {
    let theta_star = trace.settings.theta_star;
    let entries: Vec<LedgerEntry> = trace
        .records
        .iter()
        .filter(|r| r.alpha > 0.0)
        .map(|r| LedgerEntry {
            t: r.t,
            theta: r.theta.unwrap_or(theta_star / r.alpha.sqrt()),
            log_evidence: r.log_evidence,
        })
        .collect();
    if entries.is_empty() {
        return Err(SmcError::Empty("trace has no tempered iterations".into()));
    }
    if let Some(e) = entries.iter().find(|e| !e.log_evidence.is_finite()) {
        return Err(SmcError::ModelEvaluation(format!("non-finite evidence at t = {}", e.t)));
    }
    if entries.windows(2).any(|w| !(w[1].theta < w[0].theta)) {
        return Err(SmcError::InvalidArgument("ledger thetas must strictly decrease".into()));
    }
    Ok(EvidenceLedger { theta_star, entries })
}

impl EvidenceLedger {
    pub fn thetas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.theta).collect()
    }

    pub fn log_evidences(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.log_evidence).collect()
    }

    pub fn theta_range(&self) -> (f64, f64) {
        (self.entries[self.entries.len() - 1].theta, self.entries[0].theta)
    }

    /// Entry with the largest evidence.
    pub fn argmax(&self) -> &LedgerEntry {
        self.entries
            .iter()
            .fold(&self.entries[0], |b, e| if e.log_evidence > b.log_evidence { e } else { b })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,log_evidence")?;
        for e in &self.entries {
            writeln!(w, "{},{}", e.theta, e.log_evidence)?;
        }
        Ok(())
    }
}
