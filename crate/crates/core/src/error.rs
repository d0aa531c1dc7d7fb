use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("implicit step {step} did not converge after {iterations} fixed-point iterations")]
    IntegrationFailure { step: usize, iterations: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Residual (or gradient norm) recorded at every iteration.
        history: Vec<f64>,
    },

    #[error("velocity search radius {radius} too small: minimizer on the sample boundary at node {node:?}")]
    Resolution { node: Vec<usize>, radius: f64 },

    #[error("point {point:?} lies within one cell of a kink of the field")]
    NonDifferentiable { point: Vec<f64> },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
