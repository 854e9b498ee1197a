use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("incompatible checkpoint {path}: {reason}")]
    IncompatibleCheckpoint { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] coopgraph::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use coopgraph::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config { .. }) => 2,
            CliError::Core(E::NonFinite { .. } | E::NanGradient(_) | E::EmptyAttention { .. }) => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            4 => "numeric",
            _ => "data",
        }
    }

    /// Single-line JSON record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.exit_code(), "message": self.to_string() }).to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
