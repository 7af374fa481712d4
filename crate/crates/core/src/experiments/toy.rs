//! Toy study: the proposed analysis against the two baselines that treat the
//! noise level separately (grid Empirical Bayes) or as one more sampled
//! parameter (joint Fully Bayesian).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SmcError};
use crate::experiments::proposed::{prop_eb, prop_fb_with, run_proposed, ProposedRun};
use crate::experiments::theta_walk::{log_theta_step, sample_hyper_prior, theta_move};
use crate::experiments::timing::Stopwatch;
use crate::experiments::{Method, MethodResult, ParamEstimate, SmcSettings};
use crate::hyper::stats::{kde_mode, weighted_mean};
use crate::hyper::HyperPrior;
use crate::models::toy::{linspace, weighted_moments, ToyModel};
use crate::rng::StreamRng;
use crate::smc::mh::mh_accept;
use crate::smc::{run_sampler, Particle, RunTrace, SnapshotPolicy, TemperedModel};

/// Joint posterior of `(mu, theta)` with the likelihood tempered directly.
#[derive(Debug, Clone)]
pub struct ToyJointModel<'a> {
    pub toy: &'a ToyModel,
    pub prior: HyperPrior,
}

#[derive(Debug, Clone, Copy)]
pub struct JointStep {
    pub mu: f64,
    pub log_theta: f64,
}

impl<'a> ToyJointModel<'a> {
    pub fn new(toy: &'a ToyModel, prior: HyperPrior) -> Self {
        Self { toy, prior }
    }
}

impl TemperedModel for ToyJointModel<'_> {
    /// `[mu, theta]`.
    type State = [f64; 2];
    type Tuning = JointStep;

    fn id(&self) -> String {
        "toy-joint".into()
    }

    fn theta_of_alpha(&self, _alpha: f64) -> Option<f64> {
        None
    }

    fn alpha_of_theta(&self, _theta: f64) -> Option<f64> {
        None
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> [f64; 2] {
        let mu = self.toy.sample_prior(rng);
        [mu, sample_hyper_prior(&self.prior, rng)]
    }

    fn log_prior(&self, s: &[f64; 2]) -> f64 {
        self.toy.log_prior_mu(s[0]) + self.prior.log_density(s[1])
    }

    fn log_likelihood(&self, s: &[f64; 2], alpha: f64) -> f64 {
        if alpha == 0.0 {
            return 0.0;
        }
        alpha * self.toy.toy_log_likelihood(s[0], s[1])
    }

    fn retemper(&self, _s: &[f64; 2], cached: f64, from: f64, to: f64) -> Option<f64> {
        (from > 0.0).then(|| cached * (to / from))
    }

    fn tune(&self, particles: &[Particle<[f64; 2]>], weights: &[f64]) -> JointStep {
        let (_, sd) = weighted_moments(particles.iter().map(|p| p.state[0]), weights);
        JointStep {
            mu: sd.max(1e-6),
            log_theta: log_theta_step(particles.iter().map(|p| p.state[1]), weights),
        }
    }

    fn mcmc_sweep(
        &self,
        p: &mut Particle<[f64; 2]>,
        alpha: f64,
        step: &JointStep,
        rng: &mut StreamRng,
    ) -> Result<usize> {
        let mut accepted = 0;
        let z: f64 = StandardNormal.sample(rng);
        let mu = p.state[0] + step.mu * z;
        if self.toy.in_support(mu) {
            let ll = self.log_likelihood(&[mu, p.state[1]], alpha);
            if mh_accept(p.log_likelihood, ll, 0.0, rng)? {
                p.state[0] = mu;
                p.log_likelihood = ll;
                accepted += 1;
            }
        } else {
            let _: f64 = rng.random();
        }
        let mu = p.state[0];
        if theta_move(
            &mut p.state[1],
            &mut p.log_likelihood,
            step.log_theta,
            &self.prior,
            |th| self.log_likelihood(&[mu, th], alpha),
            rng,
        )? {
            accepted += 1;
        }
        Ok(accepted)
    }

    fn coords(&self, s: &[f64; 2]) -> Vec<f64> {
        s.to_vec()
    }

    fn from_coords(&self, coords: &[f64]) -> Result<[f64; 2]> {
        match coords {
            [mu, theta] => Ok([*mu, *theta]),
            _ => Err(SmcError::InvalidArgument("joint toy state has two coordinates".into())),
        }
    }

    fn evaluations(&self) -> u64 {
        self.toy.evaluations()
    }
}

fn final_weighted(trace: &RunTrace, coord: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let snap = trace.snapshot(trace.records.len() - 1)?;
    Ok((snap.states.iter().map(|c| c[coord]).collect(), snap.weights.clone()))
}

/// Everything the proposed methods produce for one dataset.
#[derive(Debug, Clone)]
pub struct ProposedToy {
    pub run: ProposedRun,
    pub eb: MethodResult,
    pub fb: MethodResult,
    /// Model evaluations made by the two analyses together.
    pub analysis_evaluations: u64,
    pub analysis_wall_seconds: f64,
}

/// One tempered run at `settings.theta_star`, then PropEB and PropFB from its trace.
pub fn proposed_toy(model: &ToyModel, prior: &HyperPrior, settings: &SmcSettings, seed: u64) -> Result<ProposedToy> {
    let model = model.with_theta_star(settings.theta_star)?;
    let cfg = settings.sampler_config(seed, settings.theta_star, SnapshotPolicy::All)?;
    let run = run_proposed(&model, &cfg)?;
    let evals0 = model.evaluations();

    let sw = Stopwatch::start(settings.threads);
    let eb = prop_eb(&run.trace, &model, prior)?;
    let mu: Vec<f64> = eb.sample.coords.iter().map(|c| c[0]).collect();
    let eb_estimate = ParamEstimate::Mu {
        map: kde_mode(&mu, &eb.sample.weights)?,
        posterior_mean: weighted_mean(&mu, &eb.sample.weights),
    };
    let (eb_cpu, eb_wall) = sw.elapsed();

    let sw = Stopwatch::start(settings.threads);
    let fb = prop_fb_with(&run.trace, eb.posterior.clone())?;
    let (mu, w) = fb.recycled.values(|c| c[0]);
    let fb_estimate = ParamEstimate::Mu { map: kde_mode(&mu, &w)?, posterior_mean: weighted_mean(&mu, &w) };
    // the FB mode maximizes the same interpolated posterior as EB
    let theta_map = eb.selection.theta;
    let theta_pm = fb.recycled.theta_mean();
    let (fb_cpu, fb_wall) = sw.elapsed();

    let analysis_evaluations = model.evaluations() - evals0;
    Ok(ProposedToy {
        eb: MethodResult {
            method: Method::PropEB,
            theta_map: eb.selection.theta,
            theta_pm: eb.selection.theta,
            estimate: eb_estimate,
            cpu_seconds: run.cpu_seconds + eb_cpu,
            wall_seconds: run.wall_seconds + eb_wall,
            evaluations: run.evaluations + analysis_evaluations,
        },
        fb: MethodResult {
            method: Method::PropFB,
            theta_map,
            theta_pm,
            estimate: fb_estimate,
            cpu_seconds: run.cpu_seconds + fb_cpu,
            wall_seconds: run.wall_seconds + fb_wall,
            evaluations: run.evaluations,
        },
        analysis_evaluations,
        analysis_wall_seconds: eb_wall + fb_wall,
        run,
    })
}

/// `ln` of the averaged joint `(1/M) sum_i p(mu_i, theta, y)` on a grid of
/// `theta`, up to a constant, with `mu_i` evenly spaced over the prior range.
pub fn baseline_eb_curve(model: &ToyModel, prior: &HyperPrior, thetas: &[f64], n_mu: usize) -> Vec<f64> {
    let (a, b) = model.mu_bounds;
    let rss: Vec<f64> = linspace(a, b, n_mu).into_iter().map(|mu| model.residual_ss(mu)).collect();
    thetas
        .iter()
        .map(|&th| {
            let terms: Vec<f64> = rss.iter().map(|&r| model.log_likelihood_from_rss(r, th)).collect();
            crate::smc::weights::log_sum_exp(&terms) + prior.log_density(th)
        })
        .collect()
}

/// Index of the largest value; ties resolve to the smallest index.
pub fn grid_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct BaselineEbToy {
    pub theta_grid: Vec<f64>,
    pub log_curve: Vec<f64>,
    pub theta_hat: f64,
    pub trace: RunTrace,
    pub result: MethodResult,
}

/// Grid search for the noise level over `[theta_star, 50 theta_true]`, then a
/// fresh tempered run at the selected value.
pub fn baseline_eb_toy(
    model: &ToyModel,
    prior: &HyperPrior,
    settings: &SmcSettings,
    theta_true: f64,
    seed: u64,
) -> Result<BaselineEbToy> {
    let evals0 = model.evaluations();
    let sw = Stopwatch::start(settings.threads);
    let theta_grid = linspace(settings.theta_star, 50.0 * theta_true, 500);
    let log_curve = baseline_eb_curve(model, prior, &theta_grid, 100);
    let theta_hat = theta_grid[grid_argmax(&log_curve)];
    let conditional = model.with_theta_star(theta_hat)?;
    let cfg = settings.sampler_config(seed, theta_hat, SnapshotPolicy::LastOnly)?;
    let trace = run_sampler(&conditional, &cfg)?;
    let (mu, w) = final_weighted(&trace, 0)?;
    let estimate = ParamEstimate::Mu { map: kde_mode(&mu, &w)?, posterior_mean: weighted_mean(&mu, &w) };
    let (cpu, wall) = sw.elapsed();
    Ok(BaselineEbToy {
        result: MethodResult {
            method: Method::BaselineEB,
            theta_map: theta_hat,
            theta_pm: theta_hat,
            estimate,
            cpu_seconds: cpu,
            wall_seconds: wall,
            evaluations: model.evaluations() - evals0 + conditional.evaluations(),
        },
        theta_grid,
        log_curve,
        theta_hat,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineFbToy {
    pub trace: RunTrace,
    pub result: MethodResult,
}

/// Standard tempering of the joint `(mu, theta)` posterior.
pub fn baseline_fb_toy(model: &ToyModel, prior: &HyperPrior, settings: &SmcSettings, seed: u64) -> Result<BaselineFbToy> {
    let joint = ToyJointModel::new(model, *prior);
    let evals0 = model.evaluations();
    let sw = Stopwatch::start(settings.threads);
    let cfg = settings.sampler_config(seed, settings.theta_star, SnapshotPolicy::LastOnly)?;
    let trace = run_sampler(&joint, &cfg)?;
    let (mu, w) = final_weighted(&trace, 0)?;
    let (theta, _) = final_weighted(&trace, 1)?;
    let estimate = ParamEstimate::Mu { map: kde_mode(&mu, &w)?, posterior_mean: weighted_mean(&mu, &w) };
    let theta_map = kde_mode(&theta, &w)?;
    let theta_pm = weighted_mean(&theta, &w);
    let (cpu, wall) = sw.elapsed();
    Ok(BaselineFbToy {
        trace,
        result: MethodResult {
            method: Method::BaselineFB,
            theta_map,
            theta_pm,
            estimate,
            cpu_seconds: cpu,
            wall_seconds: wall,
            evaluations: model.evaluations() - evals0,
        },
    })
}
