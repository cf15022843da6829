use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("reports were computed on different test sets: {0}")]
    MismatchedTestSets(String),
    #[error("service: {message}")]
    Service { code: String, message: String },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::InvalidConfig(_)
            | CliError::Io { .. }
            | CliError::Format(_)
            | CliError::MismatchedTestSets(_)
            | CliError::Service { .. } => 2,
            CliError::Invariant(_) => 3,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }
}

pub fn format_err<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Format(format!("{context}: {e}"))
}

impl From<softcrowd_service::ServiceError> for CliError {
    fn from(e: softcrowd_service::ServiceError) -> Self {
        CliError::Service { code: e.code().to_string(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
