use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum CdfaError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient BI candidates: {0}")]
    InsufficientCandidates(String),

    #[error("insufficient frames: video `{video_id}` has {len} frame(s), need at least 2")]
    InsufficientFrames { video_id: String, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("policy is not on the probability simplex: {0}")]
    SimplexViolation(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("data integrity violation: {0}")]
    DataIntegrity(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Runtime,
}

impl CdfaError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CdfaError::Config(_) => ErrorClass::Config,
            CdfaError::InsufficientCandidates(_)
            | CdfaError::InsufficientFrames { .. }
            | CdfaError::InsufficientData(_)
            | CdfaError::DataIntegrity(_)
            | CdfaError::Format { .. }
            | CdfaError::DegenerateGeometry(_) => ErrorClass::Data,
            _ => ErrorClass::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CdfaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CdfaError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = CdfaError> = std::result::Result<T, E>;
