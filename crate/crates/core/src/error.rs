use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the metric, loss, simulation and clustering routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain where the requested quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Box construction in strict mode received unordered or non-finite corners.
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    /// A malformed input file, with location context.
    #[error("parse error in {path}: {context}: {message}")]
    Parse {
        path: PathBuf,
        context: String,
        message: String,
    },

    #[error("unknown {what} `{name}`")]
    UnknownName { what: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Usage errors (bad names on the command line) map to exit code 2,
    /// everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::UnknownName { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
