//! Crate-wide error type.

use thiserror::Error;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not compose.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Named layer or parameter does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Operation not supported for this layer kind.
    #[error("unsupported: {0}")]
    Capability(String),

    /// Graph is malformed (e.g. batch norm without a preceding affine layer).
    #[error("graph structure error: {0}")]
    Structure(String),

    /// Invalid configuration value or missing required setting.
    #[error("config error: {0}")]
    Config(String),

    /// Requested more data than is available.
    #[error("size error: {0}")]
    Size(String),

    /// Baseline training diverged; the last finite-loss checkpoint is attached.
    #[error("training diverged at step {step}; last stable checkpoint attached")]
    TrainingDiverged {
        step: usize,
        last_stable: Box<crate::graph::ModelGraph>,
    },

    /// Calibration produced a non-finite loss.
    #[error("calibration failed for layer '{layer}': {reason}")]
    Calibration { layer: String, reason: String },

    /// Malformed file contents (bad magic, checksum, truncation, ...).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
