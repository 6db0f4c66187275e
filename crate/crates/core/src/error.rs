use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no strongly connected sample within {0} retries")]
    RetriesExhausted(usize),

    #[error("non-positive push-sum weight {value} at agent {agent}, block {block}")]
    DegenerateWeight { agent: usize, block: usize, value: f64 },

    #[error("invalid step-size schedule: {0}")]
    InvalidSchedule(String),

    #[error("subproblem solver failed: {0}")]
    SolverFailure(String),

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("divergence detected at round {round}: {what}")]
    DivergenceDetected { round: usize, what: String },

    #[error("invariant violated at round {round}: {what}")]
    InvariantViolation { round: usize, what: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
