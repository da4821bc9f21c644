//! Error type shared across the crate.

use thiserror::Error as ThisError;

/// Failure modes surfaced by the library.
#[derive(Debug, Clone, ThisError)]
pub enum Error {
    /// A scalar argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A node or coefficient index is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// Containers have inconsistent or insufficient sizes.
    #[error("size error: {0}")]
    Size(String),

    /// A linear solve hit a numerically singular matrix.
    #[error("singular system: {0}")]
    Singular(String),

    /// A Newton solve did not converge; carries the partial result.
    #[error(
        "step failure at node {}: residual {:.3e} after {} Newton iterations",
        .0.node,
        .0.residual_norm,
        .0.iterations
    )]
    Step(Box<crate::integrator::StepFailure>),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn index(msg: impl Into<String>) -> Self {
        Error::Index(msg.into())
    }

    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::Singular(msg.into())
    }
}
