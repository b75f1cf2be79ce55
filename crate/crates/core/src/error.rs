use std::path::PathBuf;

use thiserror::Error;

use crate::train::Checkpoint;

pub type Result<T, E = HaeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HaeError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("curvature mismatch: {left} vs {right}")]
    CurvatureMismatch { left: f64, right: f64 },

    #[error("tangent vector is not based at the requested point")]
    BaseMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("direction undefined for a zero vector ({0})")]
    ZeroVector(&'static str),

    #[error("degenerate MLR normal for class {class}: norm {norm:e}")]
    DegenerateNormal { class: usize, norm: f64 },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown parameter tensor `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter tensor `{0}`")]
    DuplicateParam(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("training diverged at step {step}")]
    Diverged { step: usize, last_good: Box<Checkpoint> },

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HaeError::DimensionMismatch { expected, found })
    }
}
