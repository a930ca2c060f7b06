use std::path::PathBuf;

use emergence_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_GUARD: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("config schema error: {0}")]
    Schema(serde_json::Error),

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Read { .. } | Self::Schema(_) | Self::Invalid(_) => EXIT_CONFIG,
            Self::Write { .. } => 1,
            Self::ChecksFailed(_) => EXIT_GUARD,
            Self::Core(e) => match e {
                CoreError::Singularity { .. } | CoreError::BlowUp { .. } => EXIT_BLOW_UP,
                CoreError::Boundary { .. } | CoreError::Domain { .. } => EXIT_GUARD,
                CoreError::Config(_)
                | CoreError::Shape { .. }
                | CoreError::Diagnostic(_)
                | CoreError::Estimator(_)
                | CoreError::Partition(_)
                | CoreError::Grid(_) => EXIT_CONFIG,
            },
        }
    }
}
