//! The tempered SMC loop.
//!
//! Each iteration reweights the previous particles to the next exponent,
//! resamples when the ESS drops below `resample_threshold * N`, then moves the
//! particles with the model's MCMC kernel. Per-particle work runs on a rayon
//! pool; random numbers come from counter-based streams so the result does
//! not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, SmcError};
use crate::rng::{stream, Purpose};
use crate::smc::model::{Particle, TemperedModel};
use crate::smc::population::ParticleSystem;
use crate::smc::schedule::{next_exponent_adaptive, TemperingSchedule};
use crate::smc::trace::{IterationRecord, RunTrace, Snapshot, SnapshotPolicy, TraceSettings, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_particles: usize,
    pub schedule: TemperingSchedule,
    pub seed: u64,
    pub resample_threshold: f64,
    pub mcmc_sweeps: usize,
    pub snapshots: SnapshotPolicy,
    /// Worker threads for per-particle work; 0 uses rayon's default.
    pub threads: usize,
    pub theta_star: f64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl SamplerConfig {
    pub fn new(n_particles: usize, schedule: TemperingSchedule, seed: u64, theta_star: f64) -> Self {
        Self {
            n_particles,
            schedule,
            seed,
            resample_threshold: 0.5,
            mcmc_sweeps: 1,
            snapshots: SnapshotPolicy::All,
            threads: 1,
            theta_star,
            verbose: false,
        }
    }
}

struct Exec {
    pool: Option<rayon::ThreadPool>,
}

impl Exec {
    fn new(threads: usize) -> Result<Self> {
        if threads == 1 {
            return Ok(Self { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SmcError::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    /// Apply `f` to every element; the first error by index wins.
    fn for_each<T, F>(&self, items: &mut [T], f: F) -> Result<()>
    where
        T: Send,
        F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
    {
        let results: Vec<Result<()>> = match &self.pool {
            None => items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect(),
            Some(pool) => pool.install(|| {
                items
                    .par_iter_mut()
                    .enumerate()
                    .map(|(i, x)| f(i, x))
                    .collect()
            }),
        };
        results.into_iter().collect()
    }

    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
            Some(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()),
        }
    }
}

fn snapshot<M: TemperedModel>(model: &M, system: &ParticleSystem<M::State>) -> Snapshot {
    Snapshot {
        states: system.particles.iter().map(|p| model.coords(&p.state)).collect(),
        weights: system.weights.normalized().to_vec(),
        log_likelihoods: system.particles.iter().map(|p| p.log_likelihood).collect(),
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(SmcError::ModelEvaluation(format!("{what} produced NaN")));
    }
    Ok(())
}

pub fn run_sampler<M: TemperedModel>(model: &M, config: &SamplerConfig) -> Result<RunTrace> {
    let n = config.n_particles;
    if n < 2 {
        return Err(SmcError::InvalidArgument("need at least 2 particles".into()));
    }
    if !(0.0..=1.0).contains(&config.resample_threshold) {
        return Err(SmcError::InvalidArgument(
            "resample threshold must lie in [0, 1]".into(),
        ));
    }
    let exec = Exec::new(config.threads)?;
    let seed = config.seed;
    let schedule = &config.schedule;

    let initial: Vec<Particle<M::State>> = exec.map(&vec![(); n], |i, _| {
        let mut rng = stream(seed, Purpose::Particle, 0, i as u64);
        Particle {
            state: model.sample_prior(&mut rng),
            log_likelihood: 0.0,
        }
    });
    let mut system = ParticleSystem::new(initial);

    let fixed_t = schedule.iterations();
    let mut records = Vec::with_capacity(fixed_t.unwrap_or(0) + 1);
    records.push(IterationRecord {
        t: 0,
        alpha: 0.0,
        theta: model.theta_of_alpha(0.0),
        ess: n as f64,
        resampled: false,
        log_evidence: 0.0,
        snapshot: config
            .snapshots
            .keeps(0, false)
            .then(|| snapshot(model, &system)),
    });

    let max_iter = schedule.max_iterations.unwrap_or(usize::MAX);
    let mut t = 0usize;
    while system.alpha < 1.0 {
        t += 1;
        let prev_alpha = system.alpha;
        let alpha = if let Some(frac) = schedule.ess_target_fraction.filter(|_| schedule.is_adaptive()) {
            if t > max_iter {
                return Err(SmcError::InvalidArgument(format!(
                    "adaptive schedule did not reach alpha = 1 within {max_iter} iterations"
                )));
            }
            let log_w = system.weights.log_unnormalized().to_vec();
            next_exponent_adaptive(&log_w, prev_alpha, frac, |a| {
                let inc = exec.map(&system.particles, |_, p| {
                    model.log_likelihood_from(&p.state, p.log_likelihood, prev_alpha, a) - p.log_likelihood
                });
                check_finite(&inc, "incremental weight")?;
                Ok(inc)
            })?
        } else {
            schedule.exponents[t]
        };
        system.t = t;
        system.alpha = alpha;

        // importance step using the particles from the previous iteration
        let new_ll = exec.map(&system.particles, |_, p| {
            model.log_likelihood_from(&p.state, p.log_likelihood, prev_alpha, alpha)
        });
        check_finite(&new_ll, "log-likelihood")?;
        let log_ratio: Vec<f64> = new_ll
            .iter()
            .zip(&system.particles)
            .map(|(new, p)| {
                if *new == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    new - p.log_likelihood
                }
            })
            .collect();
        system.update_weights(&log_ratio)?;
        for (p, ll) in system.particles.iter_mut().zip(new_ll) {
            p.log_likelihood = ll;
        }
        let ess = system.ess();

        let resampled = ess < config.resample_threshold * n as f64;
        if resampled {
            let u: f64 = stream(seed, Purpose::Resample, t as u64, 0).random();
            system.resample(u)?;
        }

        if config.mcmc_sweeps > 0 {
            let tuning = model.tune(&system.particles, system.weights.normalized());
            exec.for_each(&mut system.particles, |i, p| {
                let mut rng = stream(seed, Purpose::Particle, t as u64, i as u64);
                for _ in 0..config.mcmc_sweeps {
                    model.mcmc_sweep(p, alpha, &tuning, &mut rng)?;
                }
                Ok(())
            })?;
        }

        let last = alpha >= 1.0;
        if config.verbose {
            eprintln!(
                "t={t} alpha={alpha:.6e} theta={:?} ess={ess:.2} resampled={resampled} log_evidence={:.6}",
                model.theta_of_alpha(alpha),
                system.log_evidence
            );
        }
        records.push(IterationRecord {
            t,
            alpha,
            theta: model.theta_of_alpha(alpha),
            ess,
            resampled,
            log_evidence: system.log_evidence,
            snapshot: config.snapshots.keeps(t, last).then(|| snapshot(model, &system)),
        });
    }

    let mut schedule_out = schedule.clone();
    if schedule.is_adaptive() {
        schedule_out.exponents = records.iter().map(|r| r.alpha).collect();
    }
    Ok(RunTrace {
        schema_version: SCHEMA_VERSION.to_string(),
        settings: TraceSettings {
            model: model.id(),
            n_particles: n,
            seed,
            theta_star: config.theta_star,
            schedule: schedule_out,
            resample_threshold: config.resample_threshold,
            mcmc_sweeps: config.mcmc_sweeps,
            snapshots: config.snapshots,
        },
        records,
    })
}
