use std::collections::HashSet;

use super::{DenseMatrix, SparseError};

/// Coordinate-format sparse matrix.
///
/// Entries are kept sorted by `(row, col)`, never duplicated, and never hold an
/// explicit zero. The sorted order fixes the accumulation order of [`spmm`] and
/// [`transpose_spmm`], which therefore agree bit-for-bit with the dense products
/// on [`DenseMatrix`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoo {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseCoo {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    /// Validates triplets: indices in range, finite values, no duplicate positions.
    /// Explicit zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self, SparseError> {
        let mut seen = HashSet::with_capacity(triplets.len());
        let mut entries = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(SparseError::IndexOutOfRange {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { row: r, col: c });
            }
            if !seen.insert((r, c)) {
                return Err(SparseError::Duplicate { row: r, col: c });
            }
            if v != 0.0 {
                entries.push((r, c, v));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Fraction of stored entries, `nnz / (rows·cols)`.
    pub fn density(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            0.0
        } else {
            self.nnz() as f64 / total as f64
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m.set(r, c, v);
        }
        m
    }

    /// Nonzero count of every column.
    pub fn column_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &(_, c, _) in &self.entries {
            counts[c] += 1;
        }
        counts
    }
}

/// Keeps exactly the entries with `|value| > drop_tol`.
pub fn coo_from_dense(m: &DenseMatrix, drop_tol: f64) -> SparseCoo {
    assert!(drop_tol >= 0.0, "drop tolerance must be nonnegative");
    let mut entries = Vec::new();
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if v.abs() > drop_tol {
                entries.push((i, j, v));
            }
        }
    }
    SparseCoo {
        rows: m.rows(),
        cols: m.cols(),
        entries,
    }
}

/// Sparse × dense product `a · b`.
pub fn spmm(a: &SparseCoo, b: &DenseMatrix) -> Result<DenseMatrix, SparseError> {
    if a.cols != b.rows() {
        return Err(SparseError::DimensionMismatch {
            op: "spmm",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let w = b.cols();
    let mut out = DenseMatrix::zeros(a.rows, w);
    let dst = out.as_mut_slice();
    for &(r, c, v) in &a.entries {
        let orow = &mut dst[r * w..(r + 1) * w];
        for (o, x) in orow.iter_mut().zip(b.row(c)) {
            *o += v * x;
        }
    }
    Ok(out)
}

/// Transposed sparse × dense product `aᵀ · b`.
pub fn transpose_spmm(a: &SparseCoo, b: &DenseMatrix) -> Result<DenseMatrix, SparseError> {
    if a.rows != b.rows() {
        return Err(SparseError::DimensionMismatch {
            op: "transpose_spmm",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let w = b.cols();
    let mut out = DenseMatrix::zeros(a.cols, w);
    let dst = out.as_mut_slice();
    for &(r, c, v) in &a.entries {
        let orow = &mut dst[c * w..(c + 1) * w];
        for (o, x) in orow.iter_mut().zip(b.row(r)) {
            *o += v * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseCoo {
        let dense = DenseMatrix::from_fn(rows, cols, |_, _| {
            if rng.gen::<f64>() < density {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        coo_from_dense(&dense, 0.0)
    }

    fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    // Textbook triple loop, independent of the library kernels.
    fn naive_product(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn coo_from_dense_examples() {
        assert_eq!(coo_from_dense(&DenseMatrix::identity(3), 0.0).entries(), &[
            (0, 0, 1.0),
            (1, 1, 1.0),
            (2, 2, 1.0)
        ]);
        assert_eq!(coo_from_dense(&DenseMatrix::zeros(4, 4), 0.0).nnz(), 0);
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(coo_from_dense(&m, 0.6).entries(), &[(0, 0, 1.0), (1, 1, 1.0)]);
    }

    #[test]
    fn triplet_validation() {
        assert!(matches!(
            SparseCoo::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]),
            Err(SparseError::Duplicate { row: 0, col: 0 })
        ));
        assert!(matches!(
            SparseCoo::from_triplets(2, 2, vec![(2, 0, 1.0)]),
            Err(SparseError::IndexOutOfRange { .. })
        ));
        let s = SparseCoo::from_triplets(2, 2, vec![(1, 1, 2.0), (0, 1, 0.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(s.entries(), &[(0, 0, 1.0), (1, 1, 2.0)]);
    }

    #[test]
    fn spmm_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_dense(&mut rng, 5, 3);
        assert_eq!(spmm(&SparseCoo::identity(5), &b).unwrap(), b);
        assert_eq!(spmm(&SparseCoo::empty(5, 5), &b).unwrap(), DenseMatrix::zeros(5, 3));
        assert!(matches!(
            spmm(&SparseCoo::identity(4), &b),
            Err(SparseError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_sparse(&mut rng, 8, 8, 0.2);
        let b = random_dense(&mut rng, 8, 3);
        let got = spmm(&a, &b).unwrap();
        let want = naive_product(&a.to_dense(), &b);
        assert!(got.sub(&want).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn transpose_spmm_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_dense(&mut rng, 6, 2);
        assert_eq!(transpose_spmm(&SparseCoo::identity(6), &b).unwrap(), b);

        // P[i][perm[i]] = 1, so (Pᵀ b)[perm[i]] = b[i].
        let perm = [2usize, 0, 5, 1, 3, 4];
        let p = SparseCoo::from_triplets(6, 6, perm.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect())
            .unwrap();
        let out = transpose_spmm(&p, &b).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert_eq!(out.row(j), b.row(i));
        }

        let a = random_sparse(&mut rng, 6, 6, 0.4);
        let got = transpose_spmm(&a, &b).unwrap();
        let want = naive_product(&a.to_dense().transpose(), &b);
        assert!(got.sub(&want).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn sparse_products_bit_match_dense_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_sparse(&mut rng, 12, 12, 0.3);
        let b = random_dense(&mut rng, 12, 5);
        let d = a.to_dense();
        assert_eq!(spmm(&a, &b).unwrap(), d.matmul(&b).unwrap());
        assert_eq!(transpose_spmm(&a, &b).unwrap(), d.transpose_matmul(&b).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sparse_and_dense() -> impl Strategy<Value = (DenseMatrix, DenseMatrix)> {
            (1usize..9, 1usize..9, 1usize..5).prop_flat_map(|(r, k, c)| {
                (
                    proptest::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], r * k),
                    proptest::collection::vec(-5.0f64..5.0, k * c),
                )
                    .prop_map(move |(a, b)| {
                        (
                            DenseMatrix::from_vec(r, k, a).unwrap(),
                            DenseMatrix::from_vec(k, c, b).unwrap(),
                        )
                    })
            })
        }

        proptest! {
            #[test]
            fn spmm_equals_dense_product((a, b) in sparse_and_dense()) {
                let s = coo_from_dense(&a, 0.0);
                let got = spmm(&s, &b).unwrap();
                let want = naive_product(&a, &b);
                prop_assert!(got.sub(&want).unwrap().max_abs() <= 1e-12);
            }

            #[test]
            fn dense_round_trip_at_zero_tolerance((a, _b) in sparse_and_dense()) {
                prop_assert_eq!(coo_from_dense(&a, 0.0).to_dense(), a);
            }
        }
    }
}
