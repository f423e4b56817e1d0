//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("k = {k} exceeds cloud size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("sample count {count} exceeds cloud size {size}")]
    CountTooLarge { count: usize, size: usize },
    #[error("start index {start} out of bounds for cloud of {size} points")]
    BadStart { start: usize, size: usize },
    #[error("cloud of {size} points is too small, need at least {need}")]
    CloudTooSmall { size: usize, need: usize },
    #[error("clouds must have equal size, got {a} and {b}")]
    SizeMismatch { a: usize, b: usize },
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(
        "no init candidate below loss threshold {threshold:.6e} (best init loss {best:.6e}); \
         consider raising the threshold"
    )]
    NoCandidates { threshold: f64, best: f64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
