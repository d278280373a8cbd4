use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: objective = {value}")]
    Diverged {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error("gradient check failed: worst relative error {worst:.3e} in {block} exceeds {tolerance:.0e}")]
    GradCheck {
        block: String,
        worst: f64,
        tolerance: f64,
    },

    #[error("{path}: {message} (offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Labels {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        offset: u64,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit code for the command line: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Format { .. } | Error::Labels { .. } | Error::Data(_) | Error::Io { .. } => 3,
            Error::Dimension { .. } => 3,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::GradCheck { .. } => 4,
        }
    }

    /// Short machine-parseable tag used as the error line prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Format { .. } | Error::Labels { .. } | Error::Data(_) | Error::Io { .. } => {
                "data"
            }
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) | Error::Diverged { .. } | Error::GradCheck { .. } => "numeric",
        }
    }
}
