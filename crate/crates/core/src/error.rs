use thiserror::Error;

use crate::kalman::CovariancePair;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index {index} out of range for {len} nodes")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("riccati iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    Divergence {
        iterations: usize,
        last_change: f64,
        last: Box<CovariancePair>,
    },

    #[error("closed-loop matrix A - KC is not stable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("instance of size {size} exceeds the brute-force cap {cap}")]
    Size { size: usize, cap: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("oracle mismatch: {0}")]
    Mismatch(String),

    #[error("invalid instance: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
