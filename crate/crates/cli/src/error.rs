use std::path::Path;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// `validate` ran but at least one check failed.
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] ehwsn_core::Error),

    #[error("{failed} of {total} validation checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl HarnessError {
    pub fn config(path: impl AsRef<str>, reason: impl AsRef<str>) -> Self {
        HarnessError::Config(format!("{}: {}", path.as_ref(), reason.as_ref()))
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use ehwsn_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => exit::USAGE,
            HarnessError::Core(E::InvalidParameter { .. }) => exit::USAGE,
            HarnessError::Core(E::Infeasible { .. }) => exit::INFEASIBLE,
            HarnessError::Core(_) => exit::NUMERICAL,
            HarnessError::ChecksFailed { .. } => exit::CHECK_FAILED,
        }
    }
}
