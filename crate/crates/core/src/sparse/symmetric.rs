use std::ops::Deref;

use super::{DenseMatrix, SparseError};
use crate::mmf::GivensRotation;

/// Dense matrix that is exactly symmetric: `a[i][j] == a[j][i]` bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DenseMatrix);

impl SymmetricMatrix {
    /// Accepts only square, exactly symmetric input.
    pub fn new(m: DenseMatrix) -> Result<Self, SparseError> {
        if m.rows() != m.cols() {
            return Err(SparseError::NotSquare(m.shape()));
        }
        let n = m.rows();
        for i in 0..n {
            for j in i + 1..n {
                if m.get(i, j) != m.get(j, i) {
                    return Err(SparseError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Half-sum `(m + mᵀ)/2`, exactly symmetric by construction.
    pub fn symmetrized(m: &DenseMatrix) -> Result<Self, SparseError> {
        if m.rows() != m.cols() {
            return Err(SparseError::NotSquare(m.shape()));
        }
        let n = m.rows();
        let mut out = m.clone();
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        Ok(Self(out))
    }

    pub fn identity(n: usize) -> Self {
        Self(DenseMatrix::identity(n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DenseMatrix::from_diagonal(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.0
    }

    /// Writes `v` at `(i, j)` and `(j, i)`.
    pub(crate) fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.0.set(i, j, v);
        self.0.set(j, i, v);
    }
}

impl Deref for SymmetricMatrix {
    type Target = DenseMatrix;

    fn deref(&self) -> &DenseMatrix {
        &self.0
    }
}

/// `U a Uᵀ` for the k-point rotation `U = I ⊕_I O`.
///
/// Only the k rows and k columns in the rotation's index set are recomputed;
/// every other entry is carried over untouched. The k×k core block is mirrored
/// from its upper triangle so the result stays exactly symmetric.
pub fn conjugate_by_rotation(
    a: &SymmetricMatrix,
    rot: &GivensRotation,
) -> Result<SymmetricMatrix, SparseError> {
    let mut out = a.clone();
    conjugate_in_place(&mut out, rot.index_set(), rot.core())?;
    Ok(out)
}

pub(crate) fn conjugate_in_place(
    a: &mut SymmetricMatrix,
    idx: &[usize],
    core: &DenseMatrix,
) -> Result<(), SparseError> {
    let n = a.dim();
    let k = idx.len();
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return Err(SparseError::IndexOutOfRange {
            row: bad,
            col: bad,
            rows: n,
            cols: n,
        });
    }
    if core.shape() != (k, k) {
        return Err(SparseError::Shape(format!(
            "rotation core is {:?}, expected {k}x{k}",
            core.shape()
        )));
    }
    let m = &mut a.0;

    // Rows: new_row[a] = Σ_b O[a][b] · row[idx[b]].
    let old_rows: Vec<Vec<f64>> = idx.iter().map(|&i| m.row(i).to_vec()).collect();
    for (ra, &i) in idx.iter().enumerate() {
        let dst = m.row_mut(i);
        dst.iter_mut().for_each(|v| *v = 0.0);
        for (rb, src) in old_rows.iter().enumerate() {
            let o = core.get(ra, rb);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += o * s;
            }
        }
    }

    // Columns outside the index set mirror the updated rows exactly.
    let in_set: Vec<bool> = {
        let mut mask = vec![false; n];
        idx.iter().for_each(|&i| mask[i] = true);
        mask
    };
    for &i in idx {
        for j in 0..n {
            if !in_set[j] {
                let v = m.get(i, j);
                m.set(j, i, v);
            }
        }
    }

    // Core block: (O A_II) Oᵀ, upper triangle mirrored.
    let partial: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| idx.iter().map(|&j| m.get(i, j)).collect())
        .collect();
    for ra in 0..k {
        for rc in ra..k {
            let v: f64 = (0..k).map(|d| partial[ra][d] * core.get(rc, d)).sum();
            m.set(idx[ra], idx[rc], v);
            m.set(idx[rc], idx[ra], v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::frobenius_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut impl Rng, n: usize) -> SymmetricMatrix {
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        SymmetricMatrix::symmetrized(&m).unwrap()
    }

    fn random_rotation_core(rng: &mut impl Rng, k: usize) -> DenseMatrix {
        // Gram-Schmidt on a random matrix, flipped to det +1.
        let mut q = DenseMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..k {
            for p in 0..i {
                let dot: f64 = (0..k).map(|c| q.get(i, c) * q.get(p, c)).sum();
                for c in 0..k {
                    q.set(i, c, q.get(i, c) - dot * q.get(p, c));
                }
            }
            let norm = q.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            q.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
        if q.determinant() < 0.0 {
            q.row_mut(0).iter_mut().for_each(|v| *v = -*v);
        }
        q
    }

    fn dense_rotation(n: usize, idx: &[usize], core: &DenseMatrix) -> DenseMatrix {
        let mut u = DenseMatrix::identity(n);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                u.set(i, j, core.get(a, b));
            }
        }
        u
    }

    #[test]
    fn symmetric_constructor_rejects_asymmetry() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(SymmetricMatrix::new(m.clone()), Err(SparseError::NotSymmetric { .. })));
        let s = SymmetricMatrix::symmetrized(&m).unwrap();
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(1, 0), 1.0);
    }

    #[test]
    fn identity_core_leaves_matrix_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_symmetric(&mut rng, 6);
        let rot = GivensRotation::new(1, vec![1, 4, 2], DenseMatrix::identity(3)).unwrap();
        assert_eq!(conjugate_by_rotation(&a, &rot).unwrap(), a);
    }

    #[test]
    fn forty_five_degrees_diagonalizes_two_by_two() {
        let a = SymmetricMatrix::new(DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let core = DenseMatrix::from_rows(&[vec![s, s], vec![-s, s]]).unwrap();
        let rot = GivensRotation::new(1, vec![0, 1], core).unwrap();
        let out = conjugate_by_rotation(&a, &rot).unwrap();
        assert!((out.get(0, 0) - 3.0).abs() < 1e-14);
        assert!((out.get(1, 1) - 1.0).abs() < 1e-14);
        assert!(out.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_conjugation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_symmetric(&mut rng, 8);
        let core = random_rotation_core(&mut rng, 3);
        let idx = vec![6, 1, 3];
        let rot = GivensRotation::new(1, idx.clone(), core.clone()).unwrap();
        let got = conjugate_by_rotation(&a, &rot).unwrap();
        let u = dense_rotation(8, &idx, &core);
        let want = u.matmul(a.as_dense()).unwrap().matmul(&u.transpose()).unwrap();
        assert!(got.sub(&want).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let a = SymmetricMatrix::identity(3);
        let rot = GivensRotation::new(1, vec![0, 5], DenseMatrix::identity(2)).unwrap();
        assert!(matches!(conjugate_by_rotation(&a, &rot), Err(SparseError::IndexOutOfRange { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn isometry_locality_and_symmetry(seed in any::<u64>(), n in 3usize..10, k in 2usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = k.min(n);
                let a = random_symmetric(&mut rng, n);
                let mut idx: Vec<usize> = (0..n).collect();
                for i in 0..k {
                    let j = rng.gen_range(i..n);
                    idx.swap(i, j);
                }
                idx.truncate(k);
                let rot = GivensRotation::new(1, idx.clone(), random_rotation_core(&mut rng, k)).unwrap();
                let out = conjugate_by_rotation(&a, &rot).unwrap();

                prop_assert!((frobenius_norm(&out) - frobenius_norm(&a)).abs() <= 1e-10);
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(out.get(i, j).to_bits(), out.get(j, i).to_bits());
                        if !idx.contains(&i) && !idx.contains(&j) {
                            prop_assert_eq!(out.get(i, j).to_bits(), a.get(i, j).to_bits());
                        }
                    }
                }
            }
        }
    }
}
