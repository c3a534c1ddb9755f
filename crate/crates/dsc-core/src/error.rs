//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by panel ingestion, estimation and simulation.
#[derive(Debug, Error)]
pub enum DscError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("empty cell for unit {unit} at period {period}")]
    EmptyCell { unit: u32, period: u32 },

    #[error("unit {unit} has group size {found} at period {period}, expected {expected}")]
    UnevenGroup {
        unit: u32,
        period: u32,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("solver did not converge within {max_iter} iterations (kkt residual {kkt_residual:e})")]
    NoConvergence { max_iter: usize, kkt_residual: f64 },

    #[error("degenerate oracle: optimal post-treatment risk is zero, optimality ratio undefined")]
    DegenerateOracle,

    #[error("replication with seed {seed} failed: {message}")]
    ReplicationFailed { seed: u64, message: String },
}

pub type Result<T> = std::result::Result<T, DscError>;
