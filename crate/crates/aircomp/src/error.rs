//! Error types.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AircompError {
    /// A matrix does not have the dimensions required by the operation.
    #[error("dimension mismatch for {name}: expected {expected}, got {actual}")]
    DimensionMismatch {
        name: &'static str,
        expected: String,
        actual: String,
    },

    /// Configuration or request that cannot be satisfied.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Numerical failure (singular system, non-finite value, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, AircompError>;
