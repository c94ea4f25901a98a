use std::path::{Path, PathBuf};

use mnfret_core::Error as CoreError;

/// Process exit codes; part of the scripting contract.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const PARTIAL: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{failed} of {total} sweep cells failed, see failures.csv")]
    PartialSweep { failed: usize, total: usize },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => exit::USAGE,
            CliError::Io { .. } | CliError::Format { .. } => exit::IO,
            CliError::Core(e) => core_exit_code(e),
            CliError::PartialSweep { .. } => exit::PARTIAL,
        }
    }
}

/// Argument and shape errors are the caller's to fix; everything else is a
/// numerical failure of the data.
pub fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::DimensionMismatch { .. }
        | CoreError::InvalidArgument { .. }
        | CoreError::WrongMethod { .. } => exit::USAGE,
        CoreError::NonFinite { .. }
        | CoreError::Asymmetric { .. }
        | CoreError::NotPositiveDefinite { .. }
        | CoreError::RankDeficient { .. }
        | CoreError::SingularCorrelation { .. } => exit::NUMERICAL,
    }
}
