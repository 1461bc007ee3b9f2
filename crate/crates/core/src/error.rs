use thiserror::Error;

/// Errors raised by validation, numerics and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("sample needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("sample needs at least 1 feature column")]
    NoFeatures,

    #[error("asymmetry {value:e} at ({row}, {col}) exceeds tolerance {tol:e}")]
    Asymmetric { row: usize, col: usize, value: f64, tol: f64 },

    #[error("diagonal entry {value:e} at {index} exceeds tolerance {tol:e}")]
    NonZeroDiagonal { index: usize, value: f64, tol: f64 },

    #[error("negative distance {value:e} at ({row}, {col}) beyond tolerance {tol:e}")]
    NegativeDistance { row: usize, col: usize, value: f64, tol: f64 },

    #[error("confusion entry {value} at ({row}, {col}) outside [0, 1]")]
    ConfusionRange { row: usize, col: usize, value: f64 },

    #[error("confusion diagonal at {index} is {value}, expected 1")]
    ConfusionDiagonal { index: usize, value: f64 },

    #[error("negative Gram diagonal {value:e} at {index}")]
    NegativeGramDiagonal { index: usize, value: f64 },

    #[error("Gram matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("non-finite intermediate in {0}")]
    NonFiniteIntermediate(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
