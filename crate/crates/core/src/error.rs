//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A function received a value outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A likelihood or gradient evaluation produced a non-finite value.
    #[error("numerical failure at observation {index}: {message}")]
    Numerical { index: usize, message: String },

    /// Birth requested with the subhazard count already at its cap.
    #[error("subhazard capacity reached (k_max = {k_max})")]
    Capacity { k_max: usize },

    /// Inconsistent or out-of-range configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input data, reported with a 1-based line number.
    #[error("input error at line {line}: {message}")]
    Input { line: usize, message: String },

    /// Input file does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A required run artifact is missing from the output directory.
    #[error("missing run artifact: {0}")]
    MissingArtifact(String),

    /// A chain hit a numerical failure mid-run; the last state is attached
    /// for debugging.
    #[error("chain {chain} aborted at clock {clock:.6}: {message}")]
    ChainAborted {
        chain: usize,
        clock: f64,
        message: String,
        state_json: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
