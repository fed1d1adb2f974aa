//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown level {level:?} in column {column:?}")]
    UnknownLevel { column: String, level: String },

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("column {0:?} has no observed values")]
    DegenerateColumn(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("iteration did not converge within {sweeps} steps")]
    Convergence { sweeps: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("feature count {count} exceeds the exact-Shapley budget of {budget}")]
    FeatureBudget { count: usize, budget: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("masking failed: {0}")]
    Masking(String),

    #[error("rank {rank} exceeds min(n, m) = {max_rank}")]
    Rank { rank: usize, max_rank: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
