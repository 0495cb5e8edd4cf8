use std::path::PathBuf;

use crate::nmat::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or inconsistent experiment configuration.
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] sis_core::Error),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// Short machine-readable category, used on stderr.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Format { .. } => "format",
            CliError::Io { .. } => "io",
            CliError::Solver(_) => "solver",
            CliError::Output(_) => "output",
        }
    }

    /// Process exit code: 2 for usage/configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>) -> impl FnOnce(FormatError) -> CliError {
        let path = path.into();
        move |source| CliError::Format { path, source }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
