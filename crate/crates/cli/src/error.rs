use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    /// The dataset could not be obtained or does not meet the pipeline's
    /// requirements.
    #[error("dataset: {0}")]
    Dataset(#[source] irt_partition::Error),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: irt_partition::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory {0} is locked by another run (remove the .lock file if that run is gone)")]
    Locked(PathBuf),

    #[error("missing artifact {0}; run the `{1}` stage first")]
    MissingArtifact(PathBuf, &'static str),
}

impl CliError {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(irt_partition::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Process exit code: 1 usage, 2 data error, 3 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Dataset(_) => 2,
            CliError::Stage { source, .. } if source.is_data_error() => 2,
            _ => 3,
        }
    }
}
