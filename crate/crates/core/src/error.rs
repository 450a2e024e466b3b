use std::path::PathBuf;

/// Errors produced by the estimators and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The dense SVD routine did not converge. `iteration` is set when the
    /// failure happened inside an iterative solver.
    #[error("SVD failed to converge{}", match .iteration {
        Some(i) => format!(" at iteration {i}"),
        None => String::new(),
    })]
    SvdNoConvergence { iteration: Option<usize> },

    #[error("iterate became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("{path}: line {line}: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("cross-validation failed for every candidate: {0}")]
    AllCandidatesFailed(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
