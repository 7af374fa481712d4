//! Replicate studies: fresh data per replicate, every configured method on
//! it, error tables and their quartile summaries.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Distribution as _, Max, Min, OrderStatistics};

use crate::error::{Result, SmcError};
use crate::experiments::clg::{baseline_fb_clg, proposed_clg};
use crate::experiments::ospa::ospa;
use crate::experiments::toy::{baseline_eb_toy, baseline_fb_toy, proposed_toy};
use crate::experiments::{Method, MethodResult, ParamEstimate, SmcSettings};
use crate::hyper::HyperPrior;
use crate::models::geometry::{GridConfig, VoxelGrid};
use crate::models::source::{generate_clg_data, ClgDataConfig, ClgModel, ClgModelConfig};
use crate::models::toy::{generate_toy_data, ToyDataConfig, ToyModel};
use crate::rng::derive_seed;
use crate::smc::RunTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyModel {
    Toy,
    Clg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceOutput {
    #[default]
    None,
    Json,
    Gzip,
}

/// Study description. Unset optional fields take the model's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub model: StudyModel,
    pub n_replicates: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Replicates run concurrently.
    #[serde(default = "one")]
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smc: Option<SmcSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<HyperPrior>,
    #[serde(default)]
    pub toy_data: ToyDataConfig,
    #[serde(default)]
    pub clg_data: ClgDataConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub clg_model: ClgModelConfig,
    #[serde(default)]
    pub traces: TraceOutput,
}

fn one() -> usize {
    1
}

impl StudySpec {
    pub fn new(model: StudyModel, n_replicates: usize, base_seed: u64) -> Self {
        Self {
            model,
            n_replicates,
            base_seed,
            methods: None,
            output_dir: None,
            jobs: 1,
            smc: None,
            prior: None,
            toy_data: ToyDataConfig::default(),
            clg_data: ClgDataConfig::default(),
            grid: GridConfig::default(),
            clg_model: ClgModelConfig::default(),
            traces: TraceOutput::None,
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m = self.methods.clone().unwrap_or_else(|| match self.model {
            StudyModel::Toy => Method::ALL.to_vec(),
            StudyModel::Clg => vec![Method::PropEB, Method::PropFB, Method::BaselineFB],
        });
        m.sort();
        m.dedup();
        m
    }

    pub fn settings(&self) -> SmcSettings {
        self.smc.clone().unwrap_or_else(|| match self.model {
            StudyModel::Toy => SmcSettings::toy(),
            StudyModel::Clg => SmcSettings::clg(),
        })
    }

    pub fn hyper_prior(&self) -> Result<HyperPrior> {
        match self.prior {
            Some(p) => Ok(p),
            None => self.settings().default_prior(),
        }
    }

    /// The spec with every default filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut s = self.clone();
        s.methods = Some(self.methods());
        s.smc = Some(self.settings());
        s.prior = Some(self.hyper_prior()?);
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SmcError::InvalidArgument(m));
        if self.n_replicates == 0 {
            return bad("n_replicates must be positive".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be positive".into());
        }
        let s = self.settings();
        if s.n_particles < 2 {
            return bad("smc.n_particles must be at least 2".into());
        }
        if !(s.resample_threshold > 0.0 && s.resample_threshold <= 1.0) {
            return bad("smc.resample_threshold must lie in (0, 1]".into());
        }
        if !(s.theta_star > 0.0 && s.theta_max > s.theta_star) {
            return bad("smc.theta_star must be positive and below smc.theta_max".into());
        }
        if self.methods().is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.model == StudyModel::Clg && self.methods().contains(&Method::BaselineEB) {
            return bad("the grid Empirical-Bayes baseline is only defined for the toy model".into());
        }
        let prior = self.hyper_prior()?;
        if prior.support.0 < s.theta_star || prior.support.1 > s.theta_max {
            return bad(format!(
                "prior support [{}, {}] must lie inside [theta_star, theta_max] = [{}, {}]",
                prior.support.0, prior.support.1, s.theta_star, s.theta_max
            ));
        }
        let seeds = self.replicate_seeds();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return bad("replicate seeds collide; choose another base_seed".into());
        }
        Ok(())
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.n_replicates as u64).map(|r| derive_seed(self.base_seed, r)).collect()
    }
}

/// Errors of one method on one replicate. Estimates are empty if the method failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub status: String,
    pub theta_true: f64,
    pub theta_map: Option<f64>,
    pub theta_pm: Option<f64>,
    pub theta_map_err: Option<f64>,
    pub theta_pm_err: Option<f64>,
    pub theta_pm_rel_err: Option<f64>,
    /// Toy: `mu` estimates. Source model: the number of dipoles.
    pub param_map: Option<f64>,
    pub param_pm: Option<f64>,
    /// Toy: `|mu - mu_true|`. Source model: OSPA distance in cm.
    pub param_map_err: Option<f64>,
    pub param_pm_err: Option<f64>,
    pub d_true: Option<usize>,
    pub d_hat: Option<usize>,
    pub evaluations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub replicate: usize,
    pub method: Method,
    pub cpu_seconds: Option<f64>,
    pub wall_seconds: Option<f64>,
}

/// Cost of the proposed analysis relative to its sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedDiagnostics {
    pub replicate: usize,
    pub sampling_cpu_seconds: f64,
    pub sampling_wall_seconds: f64,
    pub analysis_wall_seconds: f64,
    pub analysis_evaluations: u64,
    pub recycled_samples: usize,
    pub final_particles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub statistic: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub spec: StudySpec,
    pub rows: Vec<ReplicateRow>,
    pub timings: Vec<TimingRow>,
    pub diagnostics: Vec<ProposedDiagnostics>,
}

struct ReplicateOutput {
    rows: Vec<ReplicateRow>,
    timings: Vec<TimingRow>,
    diagnostics: Option<ProposedDiagnostics>,
    traces: Vec<(Method, RunTrace)>,
}

struct Truth {
    theta: f64,
    mu: Option<f64>,
    locations: Option<Vec<[f64; 3]>>,
}

fn row_for(replicate: usize, seed: u64, truth: &Truth, res: &Result<MethodResult>, method: Method) -> (ReplicateRow, TimingRow) {
    let mut row = ReplicateRow {
        replicate,
        seed,
        method,
        status: "ok".into(),
        theta_true: truth.theta,
        theta_map: None,
        theta_pm: None,
        theta_map_err: None,
        theta_pm_err: None,
        theta_pm_rel_err: None,
        param_map: None,
        param_pm: None,
        param_map_err: None,
        param_pm_err: None,
        d_true: truth.locations.as_ref().map(Vec::len),
        d_hat: None,
        evaluations: None,
    };
    let mut timing = TimingRow { replicate, method, cpu_seconds: None, wall_seconds: None };
    match res {
        Err(e) => row.status = format!("failed: {e}"),
        Ok(r) => {
            row.theta_map = Some(r.theta_map);
            row.theta_pm = Some(r.theta_pm);
            row.theta_map_err = Some((r.theta_map - truth.theta).abs());
            row.theta_pm_err = Some((r.theta_pm - truth.theta).abs());
            row.theta_pm_rel_err = Some((r.theta_pm - truth.theta).abs() / truth.theta);
            row.evaluations = Some(r.evaluations);
            match &r.estimate {
                ParamEstimate::Mu { map, posterior_mean } => {
                    let mu = truth.mu.unwrap_or(0.0);
                    row.param_map = Some(*map);
                    row.param_pm = Some(*posterior_mean);
                    row.param_map_err = Some((map - mu).abs());
                    row.param_pm_err = Some((posterior_mean - mu).abs());
                }
                ParamEstimate::Dipoles(d) => {
                    row.d_hat = Some(d.d_hat);
                    row.param_map = Some(d.d_hat as f64);
                    row.param_map_err = truth.locations.as_ref().map(|t| ospa(&d.locations, t));
                }
            }
            timing.cpu_seconds = Some(r.cpu_seconds);
            timing.wall_seconds = Some(r.wall_seconds);
        }
    }
    (row, timing)
}

fn diagnostics_of(replicate: usize, run: &crate::experiments::proposed::ProposedRun, analysis_wall: f64, analysis_evals: u64, prior: &HyperPrior) -> Option<ProposedDiagnostics> {
    let recycled = crate::hyper::fb_average(&run.trace, prior).ok()?;
    Some(ProposedDiagnostics {
        replicate,
        sampling_cpu_seconds: run.cpu_seconds,
        sampling_wall_seconds: run.wall_seconds,
        analysis_wall_seconds: analysis_wall,
        analysis_evaluations: analysis_evals,
        recycled_samples: recycled.n_samples(),
        final_particles: run.trace.settings.n_particles,
    })
}

fn method_seed(seed: u64, method: Method) -> u64 {
    derive_seed(seed, 1000 + method as u64)
}

fn run_replicate(spec: &StudySpec, grid: Option<&Arc<VoxelGrid>>, replicate: usize, seed: u64, keep_traces: bool) -> Result<ReplicateOutput> {
    let methods = spec.methods();
    let settings = spec.settings();
    let prior = spec.hyper_prior()?;
    let mut results: Vec<(Method, Result<MethodResult>)> = Vec::new();
    let mut traces = Vec::new();
    let mut diagnostics = None;
    let wants_prop = methods.contains(&Method::PropEB) || methods.contains(&Method::PropFB);
    let prop_seed = method_seed(seed, Method::PropFB);

    let truth = match spec.model {
        StudyModel::Toy => {
            let data = generate_toy_data(seed, &spec.toy_data);
            let model = ToyModel::from_dataset(&data, settings.theta_star)?;
            if wants_prop {
                match proposed_toy(&model, &prior, &settings, prop_seed) {
                    Ok(p) => {
                        diagnostics = diagnostics_of(replicate, &p.run, p.analysis_wall_seconds, p.analysis_evaluations, &prior);
                        results.push((Method::PropEB, Ok(p.eb)));
                        results.push((Method::PropFB, Ok(p.fb)));
                        if keep_traces {
                            traces.push((Method::PropEB, p.run.trace.clone()));
                            traces.push((Method::PropFB, p.run.trace));
                        }
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        results.push((Method::PropEB, Err(SmcError::ModelEvaluation(msg.clone()))));
                        results.push((Method::PropFB, Err(e)));
                    }
                }
            }
            if methods.contains(&Method::BaselineEB) {
                match baseline_eb_toy(&model, &prior, &settings, data.theta_true, method_seed(seed, Method::BaselineEB)) {
                    Ok(b) => {
                        if keep_traces {
                            traces.push((Method::BaselineEB, b.trace));
                        }
                        results.push((Method::BaselineEB, Ok(b.result)));
                    }
                    Err(e) => results.push((Method::BaselineEB, Err(e))),
                }
            }
            if methods.contains(&Method::BaselineFB) {
                match baseline_fb_toy(&model, &prior, &settings, method_seed(seed, Method::BaselineFB)) {
                    Ok(b) => {
                        if keep_traces {
                            traces.push((Method::BaselineFB, b.trace));
                        }
                        results.push((Method::BaselineFB, Ok(b.result)));
                    }
                    Err(e) => results.push((Method::BaselineFB, Err(e))),
                }
            }
            Truth { theta: data.theta_true, mu: Some(data.mu_true), locations: None }
        }
        StudyModel::Clg => {
            let grid = grid.ok_or_else(|| SmcError::InvalidArgument("source study without a grid".into()))?;
            let (data, truth) = generate_clg_data(seed, grid, &spec.clg_data)?;
            let mut cfg = spec.clg_model.clone();
            cfg.theta_star = settings.theta_star;
            let model = ClgModel::new(grid.clone(), &data, &cfg)?;
            if wants_prop {
                match proposed_clg(&model, &prior, &settings, prop_seed) {
                    Ok(p) => {
                        diagnostics = diagnostics_of(replicate, &p.run, p.analysis_wall_seconds, p.analysis_evaluations, &prior);
                        results.push((Method::PropEB, Ok(p.eb)));
                        results.push((Method::PropFB, Ok(p.fb)));
                        if keep_traces {
                            traces.push((Method::PropEB, p.run.trace.clone()));
                            traces.push((Method::PropFB, p.run.trace));
                        }
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        results.push((Method::PropEB, Err(SmcError::ModelEvaluation(msg.clone()))));
                        results.push((Method::PropFB, Err(e)));
                    }
                }
            }
            if methods.contains(&Method::BaselineFB) {
                match baseline_fb_clg(&model, &prior, &settings, method_seed(seed, Method::BaselineFB)) {
                    Ok(b) => {
                        if keep_traces {
                            traces.push((Method::BaselineFB, b.trace));
                        }
                        results.push((Method::BaselineFB, Ok(b.result)));
                    }
                    Err(e) => results.push((Method::BaselineFB, Err(e))),
                }
            }
            Truth { theta: truth.theta_true, mu: None, locations: Some(truth.positions.clone()) }
        }
    };

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (method, res) in results.iter().filter(|(m, _)| methods.contains(m)) {
        let (r, t) = row_for(replicate, seed, &truth, res, *method);
        rows.push(r);
        timings.push(t);
    }
    traces.retain(|(m, _)| methods.contains(m));
    Ok(ReplicateOutput { rows, timings, diagnostics, traces })
}

fn failed_rows(spec: &StudySpec, replicate: usize, seed: u64, e: &SmcError) -> ReplicateOutput {
    let truth = Truth { theta: f64::NAN, mu: None, locations: None };
    let err: Result<MethodResult> = Err(SmcError::Generation(e.to_string()));
    let (rows, timings) = spec.methods().into_iter().map(|m| row_for(replicate, seed, &truth, &err, m)).unzip();
    ReplicateOutput { rows, timings, diagnostics: None, traces: vec![] }
}

fn write_trace(dir: &Path, replicate: usize, method: Method, trace: &RunTrace, mode: TraceOutput) -> Result<()> {
    let name = format!("rep{replicate:04}_{}", method.name());
    match mode {
        TraceOutput::None => Ok(()),
        TraceOutput::Json => trace.write_json(BufWriter::new(File::create(dir.join(format!("{name}.json")))?)),
        TraceOutput::Gzip => {
            let mut gz = GzEncoder::new(BufWriter::new(File::create(dir.join(format!("{name}.json.gz")))?), Compression::default());
            trace.write_json(&mut gz)?;
            gz.finish()?.flush()?;
            Ok(())
        }
    }
}

/// Run every replicate; a failing replicate is recorded and the study continues.
pub fn run_study(spec: &StudySpec) -> Result<StudyOutcome> {
    spec.validate()?;
    let spec = spec.resolved()?;
    let grid = match spec.model {
        StudyModel::Clg => Some(Arc::new(VoxelGrid::new(spec.grid.clone())?)),
        StudyModel::Toy => None,
    };
    let trace_dir = match (&spec.output_dir, spec.traces) {
        (Some(dir), mode) if mode != TraceOutput::None => {
            let d = dir.join("traces");
            fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let seeds = spec.replicate_seeds();
    let one_replicate = |r: usize| -> Result<ReplicateOutput> {
        let seed = seeds[r];
        let mut out = match run_replicate(&spec, grid.as_ref(), r, seed, trace_dir.is_some()) {
            Ok(o) => o,
            Err(e) => failed_rows(&spec, r, seed, &e),
        };
        if let Some(dir) = &trace_dir {
            for (m, t) in out.traces.drain(..) {
                write_trace(dir, r, m, &t, spec.traces)?;
            }
        }
        Ok(out)
    };
    let outputs: Vec<Result<ReplicateOutput>> = if spec.jobs == 1 {
        (0..spec.n_replicates).map(one_replicate).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| SmcError::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..spec.n_replicates).into_par_iter().map(one_replicate).collect())
    };
    let mut outcome = StudyOutcome { spec: spec.clone(), rows: vec![], timings: vec![], diagnostics: vec![] };
    for out in outputs {
        let out = out?;
        outcome.rows.extend(out.rows);
        outcome.timings.extend(out.timings);
        outcome.diagnostics.extend(out.diagnostics);
    }
    if let Some(dir) = &spec.output_dir {
        outcome.write(dir)?;
    }
    Ok(outcome)
}

fn csv_err(e: csv::Error) -> SmcError {
    SmcError::Io(std::io::Error::other(e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Order statistics of the finite values, `NaN` if there are none.
pub fn five_numbers(values: &[f64]) -> BTreeMap<&'static str, f64> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let mut out = BTreeMap::new();
    out.insert("n", v.len() as f64);
    let mut d = Data::new(v.clone());
    let nan = v.is_empty();
    let pick = |x: f64| if nan { f64::NAN } else { x };
    out.insert("min", pick(d.min()));
    out.insert("q1", pick(d.lower_quartile()));
    out.insert("median", pick(d.median()));
    out.insert("q3", pick(d.upper_quartile()));
    out.insert("max", pick(d.max()));
    out.insert("mean", pick(d.mean().unwrap_or(f64::NAN)));
    out
}

const STATS: [&str; 7] = ["n", "min", "q1", "median", "q3", "max", "mean"];

impl StudyOutcome {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReplicateRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Error metrics summarized per method.
    pub fn metric_names(&self) -> [&'static str; 4] {
        match self.spec.model {
            StudyModel::Toy => ["theta_map_err", "theta_pm_err", "mu_map_err", "mu_pm_err"],
            StudyModel::Clg => ["theta_map_err", "theta_pm_err", "theta_pm_rel_err", "ospa"],
        }
    }

    fn metric(&self, row: &ReplicateRow, name: &str) -> Option<f64> {
        match name {
            "theta_map_err" => row.theta_map_err,
            "theta_pm_err" => row.theta_pm_err,
            "theta_pm_rel_err" => row.theta_pm_rel_err,
            "mu_map_err" | "ospa" => row.param_map_err,
            "mu_pm_err" => row.param_pm_err,
            _ => None,
        }
    }

    pub fn metric_values(&self, method: Method, name: &str) -> Vec<f64> {
        self.rows_for(method).filter_map(|r| self.metric(r, name)).collect()
    }

    pub fn median(&self, method: Method, name: &str) -> f64 {
        five_numbers(&self.metric_values(method, name))["median"]
    }

    /// One row per statistic, one column per `method_metric`.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let methods = self.spec.methods();
        let mut cols: Vec<(String, BTreeMap<&'static str, f64>)> = Vec::new();
        for m in &methods {
            for name in self.metric_names() {
                cols.push((format!("{}_{}", m.name(), name), five_numbers(&self.metric_values(*m, name))));
            }
        }
        STATS
            .iter()
            .map(|s| SummaryRow {
                statistic: s.to_string(),
                values: cols.iter().map(|(c, v)| (c.clone(), v[s])).collect(),
            })
            .collect()
    }

    pub fn cpu_seconds(&self, method: Method) -> Vec<Option<f64>> {
        self.timings.iter().filter(|t| t.method == method).map(|t| t.cpu_seconds).collect()
    }

    /// Replicates on which `a` used less CPU than `b`, out of those where both ran.
    pub fn cpu_wins(&self, a: Method, b: Method) -> (usize, usize) {
        let (xa, xb) = (self.cpu_seconds(a), self.cpu_seconds(b));
        let both: Vec<(f64, f64)> = xa.iter().zip(&xb).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
        (both.iter().filter(|(x, y)| x < y).count(), both.len())
    }

    /// Write `spec.json`, `replicates.csv` and `summary.csv` (deterministic) and
    /// `timings.csv`, `runtime_summary.csv`, `diagnostics.csv` (measured).
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&self.spec)? + "\n")?;
        write_csv(&dir.join("replicates.csv"), &self.rows)?;

        let summary = self.summary();
        let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
        if !summary.is_empty() {
            // method order rather than alphabetical
            let ordered = self.ordered_columns();
            w.write_record(std::iter::once("statistic".to_string()).chain(ordered.iter().cloned())).map_err(csv_err)?;
            for row in &summary {
                w.write_record(
                    std::iter::once(row.statistic.clone()).chain(ordered.iter().map(|c| format_value(row.values[c]))),
                )
                .map_err(csv_err)?;
            }
        }
        w.flush()?;

        write_csv(&dir.join("timings.csv"), &self.timings)?;
        let mut w = csv::Writer::from_path(dir.join("runtime_summary.csv")).map_err(csv_err)?;
        w.write_record(["method", "n", "cpu_min", "cpu_median", "cpu_mean", "cpu_max", "wall_median"]).map_err(csv_err)?;
        for m in self.spec.methods() {
            let cpu: Vec<f64> = self.cpu_seconds(m).into_iter().flatten().collect();
            let wall: Vec<f64> = self.timings.iter().filter(|t| t.method == m).filter_map(|t| t.wall_seconds).collect();
            let c = five_numbers(&cpu);
            let wl = five_numbers(&wall);
            w.write_record([
                m.name().to_string(),
                format_value(c["n"]),
                format_value(c["min"]),
                format_value(c["median"]),
                format_value(c["mean"]),
                format_value(c["max"]),
                format_value(wl["median"]),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        write_csv(&dir.join("diagnostics.csv"), &self.diagnostics)?;
        Ok(())
    }

    fn ordered_columns(&self) -> Vec<String> {
        self.spec
            .methods()
            .iter()
            .flat_map(|m| self.metric_names().map(|n| format!("{}_{}", m.name(), n)))
            .collect()
    }
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}
