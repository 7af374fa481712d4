use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::json;

use hypersmc::experiments::StudyModel;
use hypersmc::models::geometry::{GridConfig, VoxelGrid};
use hypersmc::models::source::{generate_clg_data, ClgDataConfig, ClgDataset, ClgModel, ClgModelConfig};
use hypersmc::models::toy::{generate_toy_data, ToyDataConfig, ToyDataset, ToyModel};
use hypersmc::smc::RunTrace;

/// A dataset file: the observations and everything needed to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Dataset {
    Toy(ToyDataset),
    Clg(ClgDataset),
}

impl Dataset {
    pub fn model(&self) -> StudyModel {
        match self {
            Dataset::Toy(_) => StudyModel::Toy,
            Dataset::Clg(_) => StudyModel::Clg,
        }
    }

    pub fn toy_model(&self, theta_star: f64) -> Result<ToyModel> {
        match self {
            Dataset::Toy(d) => Ok(ToyModel::from_dataset(d, theta_star)?),
            Dataset::Clg(_) => anyhow::bail!("dataset holds source-localization data, not toy data"),
        }
    }

    pub fn clg_model(&self, config: &ClgModelConfig) -> Result<ClgModel> {
        match self {
            Dataset::Clg(d) => Ok(ClgModel::new(Arc::new(VoxelGrid::new(d.grid.clone())?), d, config)?),
            Dataset::Toy(_) => anyhow::bail!("dataset holds toy data, not source-localization data"),
        }
    }
}

fn write_pretty<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes `dataset.json`, `truth.json` and `observations.csv` into `out`.
pub fn generate(model: StudyModel, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut csv = csv::Writer::from_path(out.join("observations.csv"))?;
    let (dataset, truth) = match model {
        StudyModel::Toy => {
            let d = generate_toy_data(seed, &ToyDataConfig::default());
            csv.write_record(["t", "y"])?;
            for (t, y) in d.times.iter().zip(&d.data) {
                csv.write_record([t.to_string(), y.to_string()])?;
            }
            let truth = json!({"mu_true": d.mu_true, "theta_true": d.theta_true});
            (Dataset::Toy(d), truth)
        }
        StudyModel::Clg => {
            let cfg = ClgDataConfig::default();
            let grid = VoxelGrid::new(GridConfig::default())?;
            let (d, truth) = generate_clg_data(seed, &grid, &cfg)?;
            // one row per sensor, one column per time index
            let mut header = vec!["sensor".to_string()];
            header.extend(d.times.iter().map(|t| format!("t{t}")));
            csv.write_record(&header)?;
            for (s, row) in d.observations.iter().enumerate() {
                let mut rec = vec![s.to_string()];
                rec.extend(row.iter().map(|y| y.to_string()));
                csv.write_record(&rec)?;
            }
            (Dataset::Clg(d), serde_json::to_value(truth)?)
        }
    };
    csv.flush()?;
    write_pretty(&out.join("dataset.json"), &dataset)?;
    write_pretty(&out.join("truth.json"), &truth)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing dataset {}", path.display()))
}

fn gzipped(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    if gzipped(path) {
        let mut gz = GzEncoder::new(w, Compression::default());
        trace.write_json(&mut gz)?;
        gz.finish()?.flush()?;
    } else {
        let mut w = w;
        trace.write_json(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<RunTrace> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let trace = if gzipped(path) { RunTrace::read_json(GzDecoder::new(r)) } else { RunTrace::read_json(r) };
    trace.with_context(|| format!("reading trace {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_pretty(path, v)
}
