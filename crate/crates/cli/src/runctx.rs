//! Error-to-exit-code mapping shared by all subcommands.
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 numerical failure.

use gatedsim_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub fn exit_code_for(err: &CliError) -> i32 {
    match err {
        CliError::Core(core) => match core {
            CoreError::Io { .. } => 3,
            CoreError::Calibration(_) | CoreError::NoUsablePoints { .. } => 4,
            CoreError::InvalidParameter(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::Format { .. } => 2,
        },
        CliError::Config(_) => 2,
        CliError::Io { .. } => 3,
        CliError::Numerical(_) => 4,
    }
}

pub type CliResult = Result<(), CliError>;
