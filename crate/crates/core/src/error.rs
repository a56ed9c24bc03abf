use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("invalid method: {0}")]
    InvalidMethod(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("negative exponent {exponent} requested (decreasing abscissas); enable allow_nonmonotone to override")]
    NegativeExponent { exponent: f64 },
    #[error("no TVD transition inside the sweep range [{lo}, {hi}]")]
    NoTransition { lo: f64, hi: f64 },
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;
