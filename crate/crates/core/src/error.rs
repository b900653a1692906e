use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum EpqError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    /// The input operator violates the energy-preservation condition.
    #[error(
        "operator is not energy-preserving: triple ({}, {}, {}) has residual {residual:.3e} (tolerance {tolerance:.3e})",
        triple.0, triple.1, triple.2
    )]
    NotEnergyPreserving {
        /// 1-based indices of the worst triple.
        triple: (usize, usize, usize),
        residual: f64,
        tolerance: f64,
    },

    /// A computation contradicted a property that must hold; signals a bug.
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),

    #[error("inference failed: {0}")]
    InferenceFailure(String),

    #[error("state became non-finite at t = {time:.4}")]
    BlowUp { time: f64 },

    #[error("reduced model diverged at t = {time:.4}")]
    UnstableModel { time: f64 },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EpqError>;
