use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error("unsupported audio format at {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("window out of range: {0}")]
    Bounds(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported graph structure: {0}")]
    Structure(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("quantization error: {0}")]
    Quant(String),

    #[error("input out of range: {0}")]
    Range(String),

    #[error("simulation stalled at cycle {cycle}: {reason}\n{trace}")]
    Deadlock { cycle: u64, reason: String, trace: String },

    #[error("power model calibration failed: {0}")]
    Calibration(String),

    #[error("power model is not calibrated; fit one with calibrate_power first")]
    Uncalibrated,

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("study error: {0}")]
    Study(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Infeasible,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::Structure(_) | Error::Parse { .. } => {
                ErrorKind::Config
            }
            Error::Ingest { .. }
            | Error::Format { .. }
            | Error::Bounds(_)
            | Error::Shape(_)
            | Error::Range(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Uncalibrated | Error::Calibration(_) | Error::Study(_) => ErrorKind::Infeasible,
            Error::TrainingDiverged { .. } | Error::Quant(_) | Error::Deadlock { .. } => {
                ErrorKind::Internal
            }
        }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingest { path: path.into(), reason: reason.into() }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
