//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed line in a JSON-lines file; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    MaskDimensions(u32, u32, u32, u32),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("frame indices not consecutive: {0} then {1}")]
    NonConsecutiveFrames(usize, usize),

    #[error("video has no frames")]
    EmptyVideo,

    #[error("instance too large for exhaustive search: {size} states (limit {limit})")]
    TooLarge { size: u128, limit: u128 },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
