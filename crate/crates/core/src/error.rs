use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("singular matrix: pivot {pivot:e} below threshold {threshold:e}")]
    Singular { pivot: f64, threshold: f64 },

    #[error("matrix not positive definite at column {index} (pivot {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("tape usage error: {0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("zero-norm ground truth at symbol {0}")]
    ZeroNorm(usize),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors that stem from numerical breakdown rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NonFinite(_)
                | Error::Diverged { .. }
        )
    }
}
