//! Tempered sequential Monte Carlo samplers whose intermediate distributions
//! are posteriors under different noise levels, so one run yields the evidence
//! curve of the noise hyper-parameter. On top of that: Empirical-Bayes
//! selection, Fully-Bayesian averaging by recycling every iteration's
//! particles, and the toy and source-localization experiments.

pub mod error;
pub mod experiments;
pub mod hyper;
pub mod models;
pub mod rng;
pub mod smc;

pub use error::{Result, SmcError};
