use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

/// Failures of a pipeline command. [`CliError::exit_code`] maps them to the
/// process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error("missing {}: run `ddfem {command}` with the same configuration first", file.display())]
    MissingPrerequisite {
        file: PathBuf,
        command: &'static str,
    },

    #[error(transparent)]
    Core(#[from] ddfem_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),

    #[error("acceptance bounds not met: {0}")]
    BoundsNotMet(String),
}

impl CliError {
    /// 0 success, 1 usage or configuration, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(e) if e.is_io() => 3,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
            CliError::BoundsNotMet(_) => 2,
            CliError::MissingPrerequisite { .. } | CliError::Io { .. } | CliError::Json(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
