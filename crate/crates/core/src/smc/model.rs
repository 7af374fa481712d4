use crate::error::Result;
use crate::rng::StreamRng;

/// A particle: a model state plus its cached tempered log-likelihood at the
/// current exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle<S> {
    pub state: S,
    pub log_likelihood: f64,
}

/// A model that an SMC sampler can temper.
///
/// The tempered target at exponent `alpha` is `prior(x) * exp(log_likelihood(x, alpha))`.
/// Models whose intermediate targets are posteriors at `theta(alpha)` return
/// the properly normalized log-likelihood at that hyper-parameter, so the
/// sampler's normalizing-constant estimate is the evidence at `theta(alpha)`.
pub trait TemperedModel: Sync {
    type State: Clone + Send + Sync;
    /// Population-level kernel tuning computed once per iteration.
    type Tuning: Send + Sync;

    fn id(&self) -> String;

    /// Hyper-parameter associated with exponent `alpha`, if any.
    fn theta_of_alpha(&self, alpha: f64) -> Option<f64>;

    /// Inverse of [`theta_of_alpha`](Self::theta_of_alpha).
    fn alpha_of_theta(&self, theta: f64) -> Option<f64>;

    fn sample_prior(&self, rng: &mut StreamRng) -> Self::State;

    fn log_prior(&self, state: &Self::State) -> f64;

    /// Log-likelihood term at `alpha`; zero at `alpha = 0`. Counts as one
    /// model evaluation when `alpha > 0`.
    fn log_likelihood(&self, state: &Self::State, alpha: f64) -> f64;

    /// Re-express a cached log-likelihood at a new exponent without a forward
    /// model evaluation, when the likelihood family permits it.
    fn retemper(&self, _state: &Self::State, _cached: f64, _from: f64, _to: f64) -> Option<f64> {
        None
    }

    fn tune(&self, particles: &[Particle<Self::State>], weights: &[f64]) -> Self::Tuning;

    /// One MCMC sweep leaving the tempered target at `alpha` invariant.
    /// Returns the number of accepted proposals.
    fn mcmc_sweep(
        &self,
        particle: &mut Particle<Self::State>,
        alpha: f64,
        tuning: &Self::Tuning,
        rng: &mut StreamRng,
    ) -> Result<usize>;

    fn coords(&self, state: &Self::State) -> Vec<f64>;

    fn from_coords(&self, coords: &[f64]) -> Result<Self::State>;

    /// Forward-model evaluations performed so far.
    fn evaluations(&self) -> u64;

    /// Log-likelihood at `to`, reusing the cached value at `from` if possible.
    fn log_likelihood_from(&self, state: &Self::State, cached: f64, from: f64, to: f64) -> f64 {
        if to == from {
            return cached;
        }
        if to == 0.0 {
            return 0.0;
        }
        match self.retemper(state, cached, from, to) {
            Some(v) => v,
            None => self.log_likelihood(state, to),
        }
    }
}
