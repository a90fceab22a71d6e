use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("component index {index} out of range for a problem with {m} components")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("Newton solve did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NewtonFailed { iterations: usize, grad_norm: f64 },

    #[error("non-finite iterate in cycle {cycle}")]
    NonFinite { cycle: usize },

    #[error("run diverged at cycle {cycle}: dist {dist:e} exceeds limit {limit:e}")]
    Diverged { cycle: usize, dist: f64, limit: f64 },

    #[error("permutation enumeration limited to m <= {max}, got m = {m}")]
    TooManyPermutations { m: usize, max: usize },

    #[error("dense per-cycle log is required but was not recorded")]
    MissingDenseLog,

    #[error("rate fit needs at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
