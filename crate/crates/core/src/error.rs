use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("unrecoverable input: {0}")]
    UnrecoverableInput(String),

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("no zero gap found in the coefficient histogram: {0}")]
    GapNotFound(String),

    #[error("estimate unavailable: proxy restoration did not converge (partial value {partial_db:.2} dB)")]
    EstimationUnavailable { partial_db: f64 },

    #[error("decode failure: {unresolved} bits unresolved")]
    DecodeFailure { unresolved: usize },

    #[error("malformed stream: {0}")]
    Malformed(String),

    #[error("capacity exceeded: {required} bits required, {available} available")]
    Capacity { required: usize, available: usize },

    #[error("side information unrecoverable: {0}")]
    SideInfoUnrecoverable(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
