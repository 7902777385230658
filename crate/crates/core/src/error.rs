use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: pivot {pivot:e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid sparse matrix: {0}")]
    Sparse(String),

    #[error("model spec error at `{path}`: {message}")]
    Spec { path: String, message: String },

    #[error("spline knots out of order: {0}")]
    KnotOrder(String),

    #[error("value outside prior or family support: {0}")]
    Support(String),

    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },

    #[error("subject {0} has longitudinal records but no survival record")]
    OrphanSubject(String),

    #[error("negative time {time} for subject {subject}")]
    NegativeTime { subject: String, time: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("inner Newton iteration diverged after {iterations} iterations (gradient {gradient:e})")]
    InnerDivergence { iterations: usize, gradient: f64 },

    #[error("unknown scenario {0}")]
    UnknownScenario(u32),

    #[error("event-rate calibration failed: {0}")]
    Calibration(String),

    #[error("risk set exhausted: {events} event times for {subjects} subjects")]
    RiskSetExhausted { events: usize, subjects: usize },

    #[error("no converged replicates")]
    NoConvergedReplicates,

    #[error("empty metric table")]
    EmptyTable,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn spec(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
