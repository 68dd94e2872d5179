use std::path::Path;

use delay_doppler::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {reason}")]
    Io { path: String, reason: String },

    /// Estimates and ground truth disagree on frame indices.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("{context}{source}")]
    Core { context: String, source: Error },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        CliError::Core {
            context: String::new(),
            source,
        }
    }
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    /// Attaches a file path to a core error.
    pub fn at(path: &Path, source: Error) -> Self {
        CliError::Core {
            context: format!("{}: ", path.display()),
            source,
        }
    }

    /// 0 success, 1 usage or validation, 2 I/O or parse, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Alignment(_) => 2,
            CliError::Core { source, .. } => match source {
                Error::Validation(_)
                | Error::Range { .. }
                | Error::DegenerateGeometry(_)
                | Error::Config(_) => 1,
                Error::Parse { .. } | Error::Io(_) => 2,
                Error::IllConditioned { .. }
                | Error::SingularFisher { .. }
                | Error::Numerical(_)
                | Error::RefinementAborted { .. }
                | Error::UndefinedMetric(_) => 3,
            },
        }
    }
}
