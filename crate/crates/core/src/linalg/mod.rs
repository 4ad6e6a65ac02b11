//! Dense and sparse direct solvers.

mod dense;
mod sparse;

pub use dense::{dense_solve, dense_solve_matrix};
pub use sparse::{sparse_solve, SparseLu, SparseMatrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is numerically singular at pivot {pivot} (|u| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("solve produced a non-finite value at row {row}; matrix is singular near that unknown")]
    NonFinite { row: usize },
    #[error("relative residual {residual:e} after refinement exceeds tolerance")]
    Inaccurate { residual: f64 },
}
