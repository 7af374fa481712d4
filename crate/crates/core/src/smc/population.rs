use crate::error::{Result, SmcError};
use crate::smc::model::Particle;
use crate::smc::resample::systematic_resample;
use crate::smc::weights::{spread, WeightVector};

/// The sampler's mutable state.
#[derive(Debug, Clone)]
pub struct ParticleSystem<S> {
    pub particles: Vec<Particle<S>>,
    pub weights: WeightVector,
    pub t: usize,
    pub alpha: f64,
    /// Running log normalizing-constant estimate.
    pub log_evidence: f64,
    /// Log average accumulated weight of every completed resampling epoch.
    pub completed_epochs: Vec<f64>,
}

impl<S: Clone> ParticleSystem<S> {
    pub fn new(particles: Vec<Particle<S>>) -> Self {
        let n = particles.len();
        Self {
            particles,
            weights: WeightVector::uniform(n),
            t: 0,
            alpha: 0.0,
            log_evidence: 0.0,
            completed_epochs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        self.weights.ess()
    }

    /// Multiply weights by `exp(log_ratio)` and refresh the evidence estimate:
    /// the product over completed epochs times the current epoch's average
    /// accumulated weight.
    pub fn update_weights(&mut self, log_ratio: &[f64]) -> Result<()> {
        let attempted: Vec<f64> = self
            .weights
            .log_unnormalized()
            .iter()
            .zip(log_ratio)
            .map(|(w, r)| w + r)
            .collect();
        match self.weights.multiply(log_ratio) {
            Ok(()) => {}
            Err(SmcError::DegeneratePopulation { reason, .. }) => {
                return Err(SmcError::DegeneratePopulation {
                    iteration: self.t,
                    alpha: self.alpha,
                    log_weight_spread: spread(&attempted),
                    reason,
                })
            }
            Err(e) => return Err(e),
        }
        self.log_evidence = self.completed_epochs.iter().sum::<f64>() + self.weights.log_mean();
        Ok(())
    }

    /// Systematic resampling with offset `u`; closes the current epoch.
    pub fn resample(&mut self, u: f64) -> Result<()> {
        let idx = systematic_resample(self.weights.normalized(), u)?;
        self.completed_epochs.push(self.weights.log_mean());
        self.particles = idx.iter().map(|&i| self.particles[i].clone()).collect();
        self.weights.reset();
        Ok(())
    }
}
