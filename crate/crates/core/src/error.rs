use thiserror::Error;

/// Errors produced by the flow, the latent optimizers and the driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance factor is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("search distribution diverged: {0}")]
    Divergence(String),

    #[error("unknown objective `{0}`")]
    UnknownObjective(String),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
