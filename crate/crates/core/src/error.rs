use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("degenerate particle population at iteration {iteration} (alpha = {alpha}): {reason}")]
    DegeneratePopulation {
        iteration: usize,
        alpha: f64,
        /// Spread between the largest and smallest finite log-weight, if any.
        log_weight_spread: f64,
        reason: String,
    },
    #[error("model evaluation returned a non-finite value: {0}")]
    ModelEvaluation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("hyper-prior support [{min}, {max}] is not covered by the explored range [{lo}, {hi}]")]
    SupportViolation { min: f64, max: f64, lo: f64, hi: f64 },
    #[error("missing snapshot for iteration {0}")]
    MissingSnapshot(usize),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("failed to generate data: {0}")]
    Generation(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SmcError> = std::result::Result<T, E>;
