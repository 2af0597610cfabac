use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the adaptation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or input failed validation; `field` names the culprit.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// Two tensors, images or datasets had incompatible shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss or intermediate became NaN/Inf during training.
    #[error("non-finite {component} at step {step}")]
    NonFinite { step: usize, component: String },

    /// A metric was asked for on data where it is undefined.
    #[error("{0}")]
    Metric(String),

    /// Malformed persisted artifact (manifest, checkpoint, CSV, image).
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed; `stage` names it.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
