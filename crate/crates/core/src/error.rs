use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of a density or distribution.
    #[error("domain error: {0}")]
    Domain(String),

    /// Model state does not agree with itself or with the data.
    #[error("inconsistent state: {0}")]
    StateInconsistency(String),

    /// The beam sampler needed more clusters than the configured cap.
    #[error(
        "truncation cap of {cap} clusters reached while extending the beam \
         (smallest slice value {min_slice:.3e}); rerun with a larger truncation cap"
    )]
    TruncationCap { cap: usize, min_slice: f64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    /// Configuration or input that fails validation before any work starts.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure during a run. The CLI maps these to exit status 1.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Parse { .. } | Error::Validation(_) | Error::Json(_) | Error::Csv(_)
        )
    }
}
