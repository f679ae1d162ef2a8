//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by group operations, filter steps, and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Two elements from different groups were combined.
    #[error("group mismatch: expected {expected}, found {found}")]
    GroupMismatch { expected: String, found: String },

    /// A vector or matrix had the wrong dimension for the requested operation.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Logarithm requested within tolerance of the rotation cut locus (angle π),
    /// where no continuous branch can be chosen.
    #[error("rotation angle {angle} rad is within {tol} of pi; logarithm rejected")]
    CutLocus { angle: f64, tol: f64 },

    /// A matrix that must be symmetric positive definite failed validation.
    #[error("matrix is not symmetric positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    /// A linear solve failed.
    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// An argument violated an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed text input (CSV or config), with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
