use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid class: {0}")]
    InvalidClass(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },
    #[error("incompatible model: {0}")]
    IncompatibleModel(String),
    #[error("registry incomplete: no head for class {0}")]
    RegistryIncomplete(u32),
    #[error("training diverged at {stage} step {step}: {detail}")]
    Divergence {
        stage: String,
        step: usize,
        detail: String,
    },
    #[error("class {class} has no positive ROIs; inspect the dataset for this class")]
    NoPositives { class: u32 },
    #[error("training head for class {class} failed: {source}")]
    ClassTraining {
        class: u32,
        #[source]
        source: Box<Error>,
    },
    #[error("incomparable reports: {0}")]
    Incomparable(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
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
