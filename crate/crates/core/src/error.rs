use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// An iterative method did not reach its tolerance.
    #[error("{method} did not converge after {iterations} iterations (last estimate {last})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        last: f64,
    },

    /// The covariance-based separation statistic is zero, so the covariance
    /// clustering route cannot distinguish the components.
    #[error(
        "covariance separation statistic is zero (components differ at most by scaling); \
         use radial clustering on distances to the origin instead"
    )]
    ZeroSeparation,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
