//! Source-localization study: the Rao-Blackwellized proposed analysis against
//! a sampler that treats the noise level as one more parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::experiments::dipoles::dipole_estimators;
use crate::experiments::proposed::{prop_eb, prop_fb_with, run_proposed, ProposedRun};
use crate::experiments::theta_walk::{log_theta_step, sample_hyper_prior, theta_move};
use crate::experiments::timing::Stopwatch;
use crate::experiments::{Method, MethodResult, ParamEstimate, SmcSettings};
use crate::hyper::stats::{kde_mode, weighted_mean};
use crate::hyper::HyperPrior;
use crate::models::source::{encode_source, lambda_step_from_population, ClgModel, Evaluated, SourceConfig};
use crate::rng::StreamRng;
use crate::smc::{run_sampler, Particle, RunTrace, SnapshotPolicy, TemperedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSource {
    pub source: SourceConfig,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct JointSourceStep {
    pub log_lambda: f64,
    pub log_theta: f64,
}

/// Marginal posterior of `(d, r, lambda, theta)` with the marginal
/// likelihood tempered directly.
#[derive(Debug, Clone)]
pub struct ClgJointModel<'a> {
    pub clg: &'a ClgModel,
    pub prior: HyperPrior,
}

impl<'a> ClgJointModel<'a> {
    pub fn new(clg: &'a ClgModel, prior: HyperPrior) -> Self {
        Self { clg, prior }
    }

    fn tempered(&self, x: &SourceConfig, theta: f64, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return 0.0;
        }
        self.clg.marginal_loglik(x, theta).map(|v| alpha * v).unwrap_or(f64::NAN)
    }
}

impl TemperedModel for ClgJointModel<'_> {
    type State = JointSource;
    type Tuning = JointSourceStep;

    fn id(&self) -> String {
        "clg-joint".into()
    }

    fn theta_of_alpha(&self, _alpha: f64) -> Option<f64> {
        None
    }

    fn alpha_of_theta(&self, _theta: f64) -> Option<f64> {
        None
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> JointSource {
        let source = self.clg.prior.sample(rng);
        JointSource { source, theta: sample_hyper_prior(&self.prior, rng) }
    }

    fn log_prior(&self, s: &JointSource) -> f64 {
        self.clg.log_prior_source(&s.source) + self.prior.log_density(s.theta)
    }

    fn log_likelihood(&self, s: &JointSource, alpha: f64) -> f64 {
        self.tempered(&s.source, s.theta, alpha)
    }

    fn retemper(&self, _s: &JointSource, cached: f64, from: f64, to: f64) -> Option<f64> {
        (from > 0.0).then(|| cached * (to / from))
    }

    fn tune(&self, particles: &[Particle<JointSource>], weights: &[f64]) -> JointSourceStep {
        JointSourceStep {
            log_lambda: lambda_step_from_population(particles.iter().map(|p| p.state.source.lambda), weights),
            log_theta: log_theta_step(particles.iter().map(|p| p.state.theta), weights),
        }
    }

    fn mcmc_sweep(
        &self,
        p: &mut Particle<JointSource>,
        alpha: f64,
        step: &JointSourceStep,
        rng: &mut StreamRng,
    ) -> Result<usize> {
        let theta = p.state.theta;
        let target = |x: &SourceConfig| {
            let log_prior = self.clg.log_prior_source(x);
            let log_lik = if log_prior == f64::NEG_INFINITY { 0.0 } else { self.tempered(x, theta, alpha) };
            Evaluated { log_prior, log_lik }
        };
        let mut cur = Evaluated { log_prior: self.clg.log_prior_source(&p.state.source), log_lik: p.log_likelihood };
        let mut accepted = self.clg.kernels.sweep(&mut p.state.source, &mut cur, step.log_lambda, &target, rng)?;
        p.log_likelihood = cur.log_lik;
        let source = &p.state.source;
        accepted += theta_move(
            &mut p.state.theta,
            &mut p.log_likelihood,
            step.log_theta,
            &self.prior,
            |th| self.tempered(source, th, alpha),
            rng,
        )? as usize;
        Ok(accepted)
    }

    /// `[theta, lambda, r_1, ..., r_d]`.
    fn coords(&self, s: &JointSource) -> Vec<f64> {
        std::iter::once(s.theta).chain(encode_source(&s.source)).collect()
    }

    fn from_coords(&self, coords: &[f64]) -> Result<JointSource> {
        let (&theta, rest) = coords
            .split_first()
            .ok_or_else(|| SmcError::InvalidArgument("empty joint source coordinates".into()))?;
        Ok(JointSource { source: self.clg.decode(rest)?, theta })
    }

    fn evaluations(&self) -> u64 {
        self.clg.evaluations()
    }
}

#[derive(Debug, Clone)]
pub struct ProposedClg {
    pub run: ProposedRun,
    pub eb: MethodResult,
    pub fb: MethodResult,
    pub analysis_evaluations: u64,
    pub analysis_wall_seconds: f64,
}

pub fn proposed_clg(model: &ClgModel, prior: &HyperPrior, settings: &SmcSettings, seed: u64) -> Result<ProposedClg> {
    let model = model.with_theta_star(settings.theta_star);
    let cfg = settings.sampler_config(seed, settings.theta_star, SnapshotPolicy::All)?;
    let run = run_proposed(&model, &cfg)?;
    let evals0 = model.evaluations();

    let sw = Stopwatch::start(settings.threads);
    let eb = prop_eb(&run.trace, &model, prior)?;
    let eb_dipoles = dipole_estimators(
        eb.sample.coords.iter().map(|c| c.as_slice()).zip(eb.sample.weights.iter().copied()),
        &model.grid,
    )?;
    let (eb_cpu, eb_wall) = sw.elapsed();
    let eb_evals = model.evaluations() - evals0;

    let sw = Stopwatch::start(settings.threads);
    let fb = prop_fb_with(&run.trace, eb.posterior.clone())?;
    let fb_dipoles = dipole_estimators(fb.recycled.samples(), &model.grid)?;
    // the FB mode maximizes the same interpolated posterior as EB
    let theta_map = eb.selection.theta;
    let theta_pm = fb.recycled.theta_mean();
    let (fb_cpu, fb_wall) = sw.elapsed();

    Ok(ProposedClg {
        eb: MethodResult {
            method: Method::PropEB,
            theta_map: eb.selection.theta,
            theta_pm: eb.selection.theta,
            estimate: ParamEstimate::Dipoles(eb_dipoles),
            cpu_seconds: run.cpu_seconds + eb_cpu,
            wall_seconds: run.wall_seconds + eb_wall,
            evaluations: run.evaluations + eb_evals,
        },
        fb: MethodResult {
            method: Method::PropFB,
            theta_map,
            theta_pm,
            estimate: ParamEstimate::Dipoles(fb_dipoles),
            cpu_seconds: run.cpu_seconds + fb_cpu,
            wall_seconds: run.wall_seconds + fb_wall,
            evaluations: run.evaluations,
        },
        analysis_evaluations: model.evaluations() - evals0,
        analysis_wall_seconds: eb_wall + fb_wall,
        run,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineFbClg {
    pub trace: RunTrace,
    pub result: MethodResult,
}

pub fn baseline_fb_clg(model: &ClgModel, prior: &HyperPrior, settings: &SmcSettings, seed: u64) -> Result<BaselineFbClg> {
    let joint = ClgJointModel::new(model, *prior);
    let evals0 = model.evaluations();
    let sw = Stopwatch::start(settings.threads);
    let cfg = settings.sampler_config(seed, settings.theta_star, SnapshotPolicy::LastOnly)?;
    let trace = run_sampler(&joint, &cfg)?;
    let snap = trace.snapshot(trace.records.len() - 1)?;
    let theta: Vec<f64> = snap.states.iter().map(|c| c[0]).collect();
    let dipoles = dipole_estimators(
        snap.states.iter().map(|c| &c[1..]).zip(snap.weights.iter().copied()),
        &model.grid,
    )?;
    let theta_map = kde_mode(&theta, &snap.weights)?;
    let theta_pm = weighted_mean(&theta, &snap.weights);
    let (cpu, wall) = sw.elapsed();
    Ok(BaselineFbClg {
        result: MethodResult {
            method: Method::BaselineFB,
            theta_map,
            theta_pm,
            estimate: ParamEstimate::Dipoles(dipoles),
            cpu_seconds: cpu,
            wall_seconds: wall,
            evaluations: model.evaluations() - evals0,
        },
        trace,
    })
}
