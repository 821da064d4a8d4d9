use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplatError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("quantile of an empty array")]
    EmptyQuantile,
    #[error("depth reinitialization found no valid depth pixels")]
    NoDepthPoints,
    #[error("empty point set")]
    EmptyPointSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite loss {loss} at iteration {iteration} on view {view}")]
    NonFiniteLoss {
        iteration: usize,
        view: usize,
        loss: f64,
    },
}

pub type Result<T, E = SplatError> = std::result::Result<T, E>;
