use thiserror::Error;

use crate::linalg::PointSet;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver did not converge (residual norm {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The iterate blew past the divergence guard; carries the last finite iterate.
    #[error("iteration diverged at step {iteration}")]
    Divergence {
        iteration: usize,
        last_finite: Box<PointSet>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no atoms kept from {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
