use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use hypersmc::experiments::dipoles::dipole_estimators;
use hypersmc::experiments::proposed::prop_eb;
use hypersmc::experiments::ParamEstimate;
use hypersmc::hyper::stats::{kde_mode, weighted_mean};
use hypersmc::hyper::{build_ledger, fb_average, hyper_posterior, HyperPrior, RecycledPosterior, WeightedSample};
use hypersmc::models::geometry::VoxelGrid;
use hypersmc::models::source::ClgModelConfig;
use hypersmc::smc::{RunTrace, TemperedModel};

use crate::data::{write_json, Dataset};

pub const CURVE_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Eb,
    Fb,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbSummary {
    pub theta_mean: f64,
    pub contributing_iterations: usize,
    pub recycled_samples: usize,
    pub final_particles: usize,
    pub estimate: Option<ParamEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub trace_model: String,
    pub mode: Mode,
    pub prior: HyperPrior,
    /// Mode of the interpolated `p(theta | y)`.
    pub map: f64,
    /// Mean of the interpolated `p(theta | y)`.
    pub pm: f64,
    pub eb_theta: Option<f64>,
    pub anchor_t: Option<usize>,
    pub ess_after_reweight: Option<f64>,
    pub degenerate: Option<bool>,
    pub eb_estimate: Option<ParamEstimate>,
    pub fb: Option<FbSummary>,
    pub analysis_evaluations: u64,
}

/// Default hyper-prior for a trace: `Gamma(2, 4 theta_star)` up to the top of the ladder.
pub fn default_prior(trace: &RunTrace) -> Result<HyperPrior> {
    let top = trace
        .records
        .iter()
        .filter(|r| r.alpha > 0.0)
        .find_map(|r| r.theta)
        .ok_or_else(|| anyhow::anyhow!("trace has no tempered iteration"))?;
    Ok(HyperPrior::default_gamma(trace.settings.theta_star, top)?)
}

fn mu_estimate(values: (Vec<f64>, Vec<f64>)) -> Result<ParamEstimate> {
    let (mu, w) = values;
    Ok(ParamEstimate::Mu { map: kde_mode(&mu, &w)?, posterior_mean: weighted_mean(&mu, &w) })
}

fn sample_estimate(kind: &str, s: &WeightedSample, data: Option<&Dataset>) -> Result<Option<ParamEstimate>> {
    match kind {
        "toy" => mu_estimate((s.coords.iter().map(|c| c[0]).collect(), s.weights.clone())).map(Some),
        "clg" => match data {
            Some(Dataset::Clg(d)) => {
                let grid = VoxelGrid::new(d.grid.clone())?;
                let pairs = s.coords.iter().map(|c| c.as_slice()).zip(s.weights.iter().copied());
                Ok(Some(ParamEstimate::Dipoles(dipole_estimators(pairs, &grid)?)))
            }
            _ => Ok(None),
        },
        _ => Ok(None),
    }
}

fn recycled_estimate(kind: &str, r: &RecycledPosterior, data: Option<&Dataset>) -> Result<Option<ParamEstimate>> {
    match kind {
        "toy" => mu_estimate(r.values(|c| c[0])).map(Some),
        "clg" => match data {
            Some(Dataset::Clg(d)) => {
                let grid = VoxelGrid::new(d.grid.clone())?;
                Ok(Some(ParamEstimate::Dipoles(dipole_estimators(r.samples(), &grid)?)))
            }
            _ => Ok(None),
        },
        _ => Ok(None),
    }
}

fn eb_part<M: TemperedModel>(
    trace: &RunTrace,
    model: &M,
    prior: &HyperPrior,
    kind: &str,
    data: Option<&Dataset>,
) -> Result<(f64, usize, WeightedSample, Option<ParamEstimate>, u64)> {
    let before = model.evaluations();
    let eb = prop_eb(trace, model, prior)?;
    let est = sample_estimate(kind, &eb.sample, data)?;
    Ok((eb.selection.theta, eb.anchor_t, eb.sample, est, model.evaluations() - before))
}

/// Ledger, posterior curve and estimator summary for one trace and prior.
pub fn analyze(
    trace: &RunTrace,
    prior: &HyperPrior,
    mode: Mode,
    data: Option<&Dataset>,
    clg_model: &ClgModelConfig,
    out: &Path,
) -> Result<AnalysisSummary> {
    fs::create_dir_all(out)?;
    let kind = trace.settings.model.as_str();
    let ledger = build_ledger(trace)?;
    ledger.write_csv(BufWriter::new(File::create(out.join("ledger.csv"))?))?;
    let post = hyper_posterior(&ledger, prior)?;
    let mut w = csv::Writer::from_path(out.join("posterior_curve.csv"))?;
    w.write_record(["theta", "density"])?;
    for (th, d) in post.curve(CURVE_POINTS) {
        w.write_record([th.to_string(), d.to_string()])?;
    }
    w.flush()?;

    let mut summary = AnalysisSummary {
        trace_model: kind.to_string(),
        mode,
        prior: *prior,
        map: post.map(),
        pm: post.posterior_mean(),
        eb_theta: None,
        anchor_t: None,
        ess_after_reweight: None,
        degenerate: None,
        eb_estimate: None,
        fb: None,
        analysis_evaluations: 0,
    };

    if mode != Mode::Fb {
        let Some(data) = data else {
            bail!("EB reweighting needs the dataset the trace was run on (--data)");
        };
        let theta_star = trace.settings.theta_star;
        let (theta, anchor, sample, est, evals) = match kind {
            "toy" => eb_part(trace, &data.toy_model(theta_star)?, prior, kind, Some(data))?,
            "clg" => {
                let cfg = ClgModelConfig { theta_star, ..clg_model.clone() };
                eb_part(trace, &data.clg_model(&cfg)?, prior, kind, Some(data))?
            }
            other => bail!("EB analysis is not available for '{other}' traces"),
        };
        summary.eb_theta = Some(theta);
        summary.anchor_t = Some(anchor);
        summary.ess_after_reweight = Some(sample.ess);
        summary.degenerate = Some(sample.degenerate);
        summary.eb_estimate = est;
        summary.analysis_evaluations = evals;
    }

    if mode != Mode::Eb {
        let recycled = fb_average(trace, prior)?;
        summary.fb = Some(FbSummary {
            theta_mean: recycled.theta_mean(),
            contributing_iterations: recycled.iterations.len(),
            recycled_samples: recycled.n_samples(),
            final_particles: trace.settings.n_particles,
            estimate: recycled_estimate(kind, &recycled, data)?,
        });
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
