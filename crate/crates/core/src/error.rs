use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fingerprint mismatch for {what}: expected {expected}, found {found}")]
    FingerprintMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("model '{model}' has no prediction for post id {id}")]
    MissingPrediction { model: String, id: u64 },

    #[error("grid cell C={c}, nu={nu}: {source}")]
    GridCell {
        c: f64,
        nu: f64,
        #[source]
        source: Box<GeoError>,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<GeoError>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<GeoError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GeoError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        GeoError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        GeoError::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, GeoError>;
