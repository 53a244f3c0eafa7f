use thiserror::Error;

/// Error taxonomy shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("Dirichlet pole on edge {edge}: k*l/pi = {kl_over_pi} is too close to an integer")]
    Pole { edge: usize, kl_over_pi: f64 },
    #[error("window intersects the forbidden set D0: {0}")]
    ForbiddenWindow(String),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
