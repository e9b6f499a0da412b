use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: schema error: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("app label \"{label}\" is reserved for relabeled flows ({context})")]
    ReservedLabel { label: String, context: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("flow has no packets")]
    EmptyFlow,

    #[error("flow {index}: {source}")]
    FlowFeatures {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("feature matrix is empty")]
    EmptyMatrix,

    #[error("training data needs at least two distinct labels, found {found}")]
    SingleClass { found: usize },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no feature has importance above {threshold}")]
    NoFeatureSelected { threshold: f64 },

    #[error("could not split training data with two classes per half after {attempts} attempts")]
    SplitFailed { attempts: usize },

    #[error("unsupported model version \"{found}\" (expected \"{expected}\")")]
    ModelVersion { found: String, expected: String },

    #[error("corrupt model: {0}")]
    ModelFormat(String),

    #[error("dataset {manifest}: {message}")]
    Dataset { manifest: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
