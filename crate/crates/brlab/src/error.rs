//! Error type of the engine, harness and command line.

use thiserror::Error;

/// Failures above the numerical core.
#[derive(Debug, Error)]
pub enum LabError {
    /// Error from the numerical core (domain, pole, construction, …).
    #[error(transparent)]
    Core(#[from] brlab_core::Error),
    /// Invalid configuration or grid, with the violated requirement.
    #[error("config error: {0}")]
    Config(String),
    /// Invalid experiment input (too few points, non-positive values, …).
    #[error("input error: {0}")]
    Input(String),
    /// Input/output failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// CSV emission failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Result alias for the crate.
pub type LabResult<T> = Result<T, LabError>;

/// Builds a [`LabError::Config`].
pub(crate) fn config(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

/// Builds a [`LabError::Input`].
pub(crate) fn input(msg: impl Into<String>) -> LabError {
    LabError::Input(msg.into())
}
