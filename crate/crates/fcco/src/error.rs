use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fcco_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("check failed: {0}")]
    CheckFailed(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 config or input error, 2 numerical abort, 3 failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(fcco_core::Error::NonFinite { .. }) | HarnessError::Core(fcco_core::Error::Schedule(_)) => 2,
            HarnessError::CheckFailed(_) => 3,
            _ => 1,
        }
    }
}
