use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("field point is {distance_mm:.4} mm from a dipole, inside the {radius_mm} mm exclusion radius")]
    Singularity { distance_mm: f64, radius_mm: f64 },

    #[error("value {value} outside domain [{min}, {max}]: {what}")]
    Domain {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("force {force} N exceeds the {max} N reachable at this location")]
    Range { force: f64, max: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("integrity check failed for {path}: {message}")]
    Integrity { path: PathBuf, message: String },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
