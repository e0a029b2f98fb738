use std::path::PathBuf;

use thiserror::Error;

use crate::outer::Solution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient {name} = {value} at x = {x} violates its bound {bound}")]
    CoefficientViolation {
        name: &'static str,
        x: f64,
        value: f64,
        bound: f64,
    },

    #[error("singular tridiagonal system: zero pivot in row {row}")]
    SingularSystem { row: usize },

    #[error("subproblem solver failure: {0}")]
    SolverFailure(String),

    /// The outer iteration hit its budget. Carries the last iterate.
    #[error("outer iteration did not converge within {iterations} iterations (last step {last_step:e})")]
    NotConverged {
        iterations: usize,
        last_step: f64,
        last: Box<Solution>,
    },

    #[error("study level k = {level} failed: {source}")]
    StudyLevel {
        level: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
