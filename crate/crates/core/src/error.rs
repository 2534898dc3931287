use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the embedding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: no rows")]
    NoRows { path: PathBuf },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("curve fit diverged: {0}")]
    FitDiverged(String),

    #[error("non-finite coordinate for vertex {vertex} in epoch {epoch} (edge {head}-{tail})")]
    Diverged {
        epoch: usize,
        vertex: usize,
        head: usize,
        tail: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
