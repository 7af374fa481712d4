//! The proposed analysis: one tempered run, then Empirical-Bayes selection
//! and Fully-Bayesian recycling from its trace.

use crate::error::Result;
use crate::hyper::{
    anchor_iteration, build_ledger, eb_select, fb_average, hyper_posterior, reweight_to_theta, EbSelection,
    HyperPosterior, HyperPrior, RecycledPosterior, WeightedSample,
};
use crate::experiments::timing::Stopwatch;
use crate::smc::{run_sampler, RunTrace, SamplerConfig, TemperedModel};

#[derive(Debug, Clone)]
pub struct ProposedRun {
    pub trace: RunTrace,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub evaluations: u64,
}

pub fn run_proposed<M: TemperedModel>(model: &M, config: &SamplerConfig) -> Result<ProposedRun> {
    let evals0 = model.evaluations();
    let sw = Stopwatch::start(config.threads);
    let trace = run_sampler(model, config)?;
    let (cpu_seconds, wall_seconds) = sw.elapsed();
    Ok(ProposedRun { trace, cpu_seconds, wall_seconds, evaluations: model.evaluations() - evals0 })
}

#[derive(Debug, Clone)]
pub struct EbOutput {
    pub posterior: HyperPosterior,
    pub selection: EbSelection,
    /// Iteration whose snapshot was reweighted.
    pub anchor_t: usize,
    pub sample: WeightedSample,
}

/// Select the noise level and reweight the nearest stored population above it.
pub fn prop_eb<M: TemperedModel>(trace: &RunTrace, model: &M, prior: &HyperPrior) -> Result<EbOutput> {
    let ledger = build_ledger(trace)?;
    let posterior = hyper_posterior(&ledger, prior)?;
    let selection = eb_select(&posterior)?;
    let thetas = ledger.thetas();
    // at the top of the ladder there is no knot above; the first one is exact
    let k = if selection.theta >= thetas[0] { 0 } else { anchor_iteration(&thetas, selection.theta)? };
    let anchor_t = ledger.entries[k].t;
    let sample = reweight_to_theta(trace, anchor_t, selection.theta, model)?;
    Ok(EbOutput { posterior, selection, anchor_t, sample })
}

#[derive(Debug, Clone)]
pub struct FbOutput<'a> {
    pub posterior: HyperPosterior,
    pub recycled: RecycledPosterior<'a>,
}

pub fn prop_fb<'a>(trace: &'a RunTrace, prior: &HyperPrior) -> Result<FbOutput<'a>> {
    let posterior = hyper_posterior(&build_ledger(trace)?, prior)?;
    prop_fb_with(trace, posterior)
}

/// As [`prop_fb`], reusing a posterior already interpolated from this trace.
pub fn prop_fb_with(trace: &RunTrace, posterior: HyperPosterior) -> Result<FbOutput<'_>> {
    let recycled = fb_average(trace, &posterior.prior)?;
    Ok(FbOutput { posterior, recycled })
}
