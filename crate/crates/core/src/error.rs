use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("line search failed after {steps} trial steps")]
    LineSearchFailed { steps: usize },

    #[error("optimizer stopped before convergence (|g|_inf = {grad_norm:e})")]
    NotConverged { grad_norm: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("{0} is undefined on empty input")]
    Empty(&'static str),

    #[error("AUC is undefined: scored set contains only one class")]
    OneClass,

    #[error("requested {requested} samples from a pool of {available}")]
    SampleSize { requested: usize, available: usize },

    #[error("batch sequencing error: expected time index {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
