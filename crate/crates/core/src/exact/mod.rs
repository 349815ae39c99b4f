//! Exact rational arithmetic and the small dense linear algebra the scheme
//! analysis runs on. Nothing here touches floating point except the explicit
//! `to_f64` renderings.

mod linalg;
mod rational;

pub use linalg::{matvec, rank, solve_linear, ExactMatrix, ExactVector};
pub use rational::Rational;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExactError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid rational '{0}'")]
    Parse(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("ragged matrix: expected rows of length {expected}, found {found}")]
    Ragged { expected: usize, found: usize },
    #[error("empty vector or matrix")]
    Empty,
    #[error("singular system")]
    Singular,
}
