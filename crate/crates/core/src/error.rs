use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mode index {0}: expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("data length {actual} does not match shape (expected {expected})")]
    DataLength { expected: usize, actual: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| = {defect:e}")]
    NotSymmetric { row: usize, col: usize, defect: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("Jacobi eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("backward called before forward")]
    NoForwardCache,
}
