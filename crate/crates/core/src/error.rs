use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error (line {line}): {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("network: {0}")]
    Network(String),

    #[error("checksum mismatch for OpenML dataset {id}: metadata says {expected}, file hashes to {actual}")]
    ChecksumMismatch {
        id: u64,
        expected: String,
        actual: String,
    },

    #[error("unknown learner family `{0}`")]
    UnknownFamily(String),

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training failed for model {model}: {reason}")]
    Training { model: String, reason: String },

    #[error("hyperparameter manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the input data rather than by a failing stage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnsupportedFormat(_)
                | Error::InvalidData(_)
                | Error::ChecksumMismatch { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::DimensionMismatch { .. }
        )
    }
}
