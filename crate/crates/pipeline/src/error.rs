//! Pipeline error type with process exit-code mapping.

use std::path::PathBuf;

/// Exit codes: validation/config problems exit 2, a numeric halt during
/// training exits 3; gate failures in `evaluate` exit 1 but are signalled by
/// return value, not by error.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Validation(cxrnet_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    FileFormat { path: PathBuf, message: String },
    #[error("training halted: {0}")]
    NanHalt(String),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        PipelineError::FileFormat {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NanHalt(_) => 3,
            _ => 2,
        }
    }
}

impl From<cxrnet_core::Error> for PipelineError {
    fn from(err: cxrnet_core::Error) -> Self {
        match err {
            cxrnet_core::Error::NonFinite(msg) => PipelineError::NanHalt(msg),
            other => PipelineError::Validation(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
