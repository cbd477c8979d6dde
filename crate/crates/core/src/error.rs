use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is singular or numerically singular ({0})")]
    Singular(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("key generation failed: {0}")]
    Generation(String),

    #[error("entropy source unavailable: {0}")]
    Environment(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid label {label} (num_classes = {num_classes}, ignore = 255)")]
    Label { label: u8, num_classes: usize },

    #[error("loss is undefined: {0}")]
    UndefinedLoss(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Training { iteration: usize, loss: f64 },

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn bad_magic(expected: &[u8; 4], found: &[u8]) -> Self {
        Error::Format(format!(
            "bad magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(expected),
            String::from_utf8_lossy(found)
        ))
    }
}
