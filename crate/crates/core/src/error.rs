use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    /// The discrete G-norm is only finite on zero-mean images under the
    /// reflecting boundary.
    #[error("image mean {mean:e} exceeds zero-mean tolerance {tolerance:e}; subtract the mean first")]
    NonZeroMean { mean: f64, tolerance: f64 },

    #[error("scene under-resolved: {0}")]
    UnderResolved(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
