//! Sparse orthonormal wavelet bases read off an MMF factorization.
//!
//! With `P_ℓ = U_ℓ … U_1`, the mother wavelet of level ℓ is the row of `P_ℓ`
//! indexed by the coordinate retired at that level, and the father wavelets are
//! the rows of `P_L` indexed by the final active set. A retired row is never
//! touched again, so every wavelet is a row of `P_L` and the basis `W` (one
//! wavelet per column) is exactly orthogonal.
//!
//! Columns are ordered fathers first, by ascending coordinate, then mothers by
//! level.

pub mod io;

use crate::mmf::MmfFactorization;
use crate::sparse::{spmm, transpose_spmm, DenseMatrix, SparseCoo, SparseError};

#[derive(Debug, thiserror::Error)]
pub enum WaveletError {
    #[error("wavelet-basis: drop tolerance {0} must be finite and nonnegative")]
    InvalidTolerance(f64),
    #[error("wavelet-basis: invalid basis: {0}")]
    InvalidBasis(String),
    #[error("wavelet-basis: parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("wavelet-basis: {0}")]
    Sparse(#[from] SparseError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletBasis {
    n: usize,
    basis: SparseCoo,
    mother_columns: Vec<usize>,
    father_columns: Vec<usize>,
    /// Coordinate whose cumulative-product row forms each column.
    coordinates: Vec<usize>,
}

impl WaveletBasis {
    /// Assembles a basis from its parts, checking shape and that the mother and
    /// father columns partition `[n]`. Orthonormality is not checked here; see
    /// [`WaveletBasis::orthonormality_residual`].
    pub fn from_parts(
        basis: SparseCoo,
        mother_columns: Vec<usize>,
        father_columns: Vec<usize>,
        coordinates: Vec<usize>,
    ) -> Result<Self, WaveletError> {
        let (n, m) = basis.shape();
        if n != m {
            return Err(WaveletError::InvalidBasis(format!("basis is {n}x{m}, not square")));
        }
        if coordinates.len() != n {
            return Err(WaveletError::InvalidBasis(format!(
                "{} coordinates for {n} columns",
                coordinates.len()
            )));
        }
        let mut seen = vec![false; n];
        for &c in mother_columns.iter().chain(&father_columns) {
            if c >= n || std::mem::replace(&mut seen[c], true) {
                return Err(WaveletError::InvalidBasis(format!(
                    "column {c} is out of range or listed twice"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(WaveletError::InvalidBasis(
                "mother and father columns do not cover every column".into(),
            ));
        }
        let mut coords_seen = vec![false; n];
        for &c in &coordinates {
            if c >= n || std::mem::replace(&mut coords_seen[c], true) {
                return Err(WaveletError::InvalidBasis(format!(
                    "coordinate {c} is out of range or repeated"
                )));
            }
        }
        Ok(Self {
            n,
            basis,
            mother_columns,
            father_columns,
            coordinates,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.mother_columns.len()
    }

    /// `W`, one wavelet per column.
    pub fn basis(&self) -> &SparseCoo {
        &self.basis
    }

    /// Mother wavelet columns, by level 1..L.
    pub fn mother_columns(&self) -> &[usize] {
        &self.mother_columns
    }

    /// Father wavelet columns, by ascending coordinate in the final active set.
    pub fn father_columns(&self) -> &[usize] {
        &self.father_columns
    }

    /// For each column, the coordinate (row of `U_L … U_1`) it was taken from.
    pub fn coordinates(&self) -> &[usize] {
        &self.coordinates
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.basis.to_dense()
    }

    /// `‖WᵀW − I‖∞`.
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = transpose_spmm(&self.basis, &self.to_dense()).expect("square basis");
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, &v) in gram.row(i).iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

/// Wavelet coefficients `Wᵀf`, one column per signal channel, rows in basis
/// column order.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoefficients {
    values: DenseMatrix,
}

impl WaveletCoefficients {
    pub fn new(values: DenseMatrix) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.values
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }
}

/// Builds `W` from the rotations of `f`. Entries with `|w| ≤ drop_tol` are
/// dropped; with `drop_tol = 0` only exact zeros are.
pub fn extract_basis(f: &MmfFactorization, drop_tol: f64) -> Result<WaveletBasis, WaveletError> {
    if !(drop_tol >= 0.0 && drop_tol.is_finite()) {
        return Err(WaveletError::InvalidTolerance(drop_tol));
    }
    let n = f.n;
    // Rows of P = U_L … U_1, built by applying each rotation to the rows it touches.
    let mut p = DenseMatrix::identity(n);
    for rot in &f.rotations {
        let idx = rot.index_set();
        let core = rot.core();
        let block: Vec<Vec<f64>> = idx.iter().map(|&i| p.row(i).to_vec()).collect();
        for (a, &i) in idx.iter().enumerate() {
            let row = p.row_mut(i);
            row.iter_mut().for_each(|v| *v = 0.0);
            for (b, src) in block.iter().enumerate() {
                let o = core.get(a, b);
                if o != 0.0 {
                    row.iter_mut().zip(src).for_each(|(v, s)| *v += o * s);
                }
            }
        }
    }

    let fathers = f.index_sets.final_set();
    let coordinates: Vec<usize> = fathers.iter().chain(f.index_sets.retired()).copied().collect();
    let mut triplets = Vec::new();
    for (col, &coord) in coordinates.iter().enumerate() {
        for (row, &v) in p.row(coord).iter().enumerate() {
            if v.abs() > drop_tol {
                triplets.push((row, col, v));
            }
        }
    }
    let basis = SparseCoo::from_triplets(n, n, triplets)?;
    let father_columns = (0..fathers.len()).collect();
    let mother_columns = (fathers.len()..n).collect();
    WaveletBasis::from_parts(basis, mother_columns, father_columns, coordinates)
}

/// Forward transform `Wᵀf`, one column per channel.
pub fn wavelet_forward(w: &WaveletBasis, signal: &DenseMatrix) -> Result<WaveletCoefficients, WaveletError> {
    Ok(WaveletCoefficients::new(transpose_spmm(&w.basis, signal)?))
}

/// Inverse transform `W ĉ`.
pub fn wavelet_inverse(w: &WaveletBasis, coeffs: &WaveletCoefficients) -> Result<DenseMatrix, WaveletError> {
    Ok(spmm(&w.basis, &coeffs.values)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub n: usize,
    pub nnz: usize,
    /// `100 · nnz / n²`.
    pub density_percent: f64,
    /// Nonzeros of each mother wavelet, by level.
    pub per_level_nnz: Vec<usize>,
    pub father_nnz: usize,
    /// `L·k² + (n − L)`: k² per retired rotation row plus one per father.
    pub bound: usize,
}

pub fn sparsity_report(w: &WaveletBasis, order_k: usize) -> SparsityReport {
    let col_nnz = w.basis.column_nnz();
    let n = w.n;
    let nnz = w.basis.nnz();
    let l = w.levels();
    SparsityReport {
        n,
        nnz,
        density_percent: if n == 0 { 0.0 } else { 100.0 * nnz as f64 / (n * n) as f64 },
        per_level_nnz: w.mother_columns.iter().map(|&c| col_nnz[c]).collect(),
        father_nnz: w.father_columns.iter().map(|&c| col_nnz[c]).sum(),
        bound: l * order_k * order_k + (n - l),
    }
}
