//! Dense and coordinate-format sparse linear algebra.

mod coo;
mod dense;
pub mod io;
mod symmetric;

pub use coo::{coo_from_dense, spmm, transpose_spmm, SparseCoo};
pub use dense::{frobenius_norm, DenseMatrix};
pub use symmetric::{conjugate_by_rotation, SymmetricMatrix};

pub(crate) use symmetric::conjugate_in_place;

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("sparse-core: dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("sparse-core: index ({row}, {col}) out of range for {rows}x{cols}")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("sparse-core: duplicate entry at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("sparse-core: non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("sparse-core: matrix is not square: {0:?}")]
    NotSquare((usize, usize)),
    #[error("sparse-core: matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("sparse-core: singular system")]
    Singular,
    #[error("sparse-core: {0}")]
    Shape(String),
    #[error("sparse-core: parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
