use thiserror::Error;

/// Errors produced by the estimation toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value violated a type invariant (non-finite weight, K < 2, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A path parameter lies outside the unambiguous range of the grid.
    #[error("range error{}: {reason}", .index.map(|i| format!(" (entry {i})")).unwrap_or_default())]
    Range {
        index: Option<usize>,
        reason: String,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Weight sub-problem is rank deficient; `pairs` lists near-duplicate atoms.
    #[error("ill-conditioned weight fit, near-duplicate paths {pairs:?}")]
    IllConditioned { pairs: Vec<(usize, usize)> },

    /// The Fisher information matrix could not be inverted.
    #[error("singular Fisher information, coupled paths {paths:?}")]
    SingularFisher { paths: Vec<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Gauss-Newton hit a non-finite cost; `last` is the last finite iterate.
    #[error("refinement aborted: {reason}")]
    RefinementAborted {
        reason: String,
        last: Vec<crate::signal_model::PathParams>,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error at byte offset {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
