//! Hyper-parameter inference from a single tempered run: the evidence
//! ledger, the interpolated marginal posterior of the noise level,
//! Empirical-Bayes selection and Fully-Bayesian recycling of every
//! iteration's particles.

pub mod ledger;
pub mod numeric;
pub mod posterior;
pub mod prior;
pub mod recycle;
pub mod reweight;
pub mod stats;

pub use ledger::{build_ledger, EvidenceLedger, LedgerEntry};
pub use numeric::trapezoid_weights;
pub use posterior::{anchor_iteration, eb_select, hyper_posterior, theta_estimators, EbSelection, HyperPosterior, ThetaEstimates};
pub use prior::{HyperPrior, PriorFamily};
pub use recycle::{fb_average, sensitivity_reweight, RecycledIteration, RecycledPosterior};
pub use reweight::{is_log_evidence, reweight_to_theta, WeightedSample};
