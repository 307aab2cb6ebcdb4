//! Single-rotation residual objective and steepest descent on SO(k).
//!
//! For a rotation on index set `I` with core `O`, write `B = A_II`,
//! `X = A_{I,R}` (R = all other coordinates) and `M = O B Oᵀ`. With masks
//! `P_II`, `P_IR` marking the pairs that count toward the residual
//! (off-diagonal and not inside `C × C` for the core set `C`):
//!
//! ```text
//! F(O) = Σ P_II ⊙ M² + 2 Σ P_IR ⊙ (O X)² + const
//! ∇F  = 4 (P_II ⊙ M) O B + 4 (P_IR ⊙ O X) Xᵀ
//! ```
//!
//! The Riemannian gradient is the tangent projection `∇F − O sym(Oᵀ∇F)`.

use crate::sparse::{DenseMatrix, SymmetricMatrix};

pub(crate) struct RotationObjective {
    k: usize,
    block: DenseMatrix,
    cross: DenseMatrix,
    mask_block: Vec<bool>,
    mask_cross: Vec<bool>,
    constant: f64,
}

impl RotationObjective {
    pub(crate) fn new(a: &SymmetricMatrix, idx: &[usize], core_set: &[usize]) -> Self {
        let n = a.dim();
        let k = idx.len();
        let mut in_core = vec![false; n];
        core_set.iter().for_each(|&i| in_core[i] = true);
        let mut in_idx = vec![false; n];
        idx.iter().for_each(|&i| in_idx[i] = true);
        let rest: Vec<usize> = (0..n).filter(|&j| !in_idx[j]).collect();

        let block = DenseMatrix::from_fn(k, k, |p, q| a.get(idx[p], idx[q]));
        let cross = DenseMatrix::from_fn(k, rest.len(), |p, j| a.get(idx[p], rest[j]));
        let mut mask_block = vec![false; k * k];
        for p in 0..k {
            for q in 0..k {
                mask_block[p * k + q] = p != q && !(in_core[idx[p]] && in_core[idx[q]]);
            }
        }
        let mut mask_cross = vec![false; k * rest.len()];
        for p in 0..k {
            for (j, &r) in rest.iter().enumerate() {
                mask_cross[p * rest.len() + j] = !(in_core[idx[p]] && in_core[r]);
            }
        }
        // Pairs that never touch I are unaffected by the rotation.
        let mut constant = 0.0;
        for (ri, &i) in rest.iter().enumerate() {
            for &j in &rest[ri + 1..] {
                if !(in_core[i] && in_core[j]) {
                    constant += 2.0 * a.get(i, j).powi(2);
                }
            }
        }
        Self {
            k,
            block,
            cross,
            mask_block,
            mask_cross,
            constant,
        }
    }

    /// Part of the objective that depends on the core.
    pub(crate) fn variable(&self, core: &DenseMatrix) -> f64 {
        let m = core
            .matmul(&self.block)
            .and_then(|ob| ob.matmul(&core.transpose()))
            .expect("k x k shapes");
        let ox = core.matmul(&self.cross).expect("k x (n-k) shapes");
        let inner: f64 = m
            .as_slice()
            .iter()
            .zip(&self.mask_block)
            .filter(|(_, &keep)| keep)
            .map(|(v, _)| v * v)
            .sum();
        let outer: f64 = ox
            .as_slice()
            .iter()
            .zip(&self.mask_cross)
            .filter(|(_, &keep)| keep)
            .map(|(v, _)| v * v)
            .sum();
        inner + 2.0 * outer
    }

    pub(crate) fn constant(&self) -> f64 {
        self.constant
    }

    pub(crate) fn value(&self, core: &DenseMatrix) -> f64 {
        self.constant + self.variable(core)
    }

    pub(crate) fn euclidean_gradient(&self, core: &DenseMatrix) -> DenseMatrix {
        let k = self.k;
        let m = core
            .matmul(&self.block)
            .and_then(|ob| ob.matmul(&core.transpose()))
            .expect("k x k shapes");
        let mut em = m;
        for (v, &keep) in em.as_mut_slice().iter_mut().zip(&self.mask_block) {
            if !keep {
                *v = 0.0;
            }
        }
        let mut g = em
            .matmul(core)
            .and_then(|x| x.matmul(&self.block))
            .expect("k x k shapes");
        if self.cross.cols() > 0 {
            let mut ox = core.matmul(&self.cross).expect("k x (n-k) shapes");
            for (v, &keep) in ox.as_mut_slice().iter_mut().zip(&self.mask_cross) {
                if !keep {
                    *v = 0.0;
                }
            }
            // (P ⊙ OX) Xᵀ
            let t = DenseMatrix::from_fn(k, k, |p, q| {
                ox.row(p).iter().zip(self.cross.row(q)).map(|(x, y)| x * y).sum()
            });
            g.as_mut_slice().iter_mut().zip(t.as_slice()).for_each(|(a, b)| *a += b);
        }
        g.scale(4.0)
    }

    /// Squared norm of the rows being rotated; sets the natural step scale.
    pub(crate) fn scale(&self) -> f64 {
        let b: f64 = self.block.as_slice().iter().map(|v| v * v).sum();
        let x: f64 = self.cross.as_slice().iter().map(|v| v * v).sum();
        b + x
    }
}

fn sym(m: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
}

/// Projects a Euclidean gradient onto the tangent space at `core`:
/// `G − O sym(OᵀG)`.
pub fn riemannian_gradient(core: &DenseMatrix, euclidean: &DenseMatrix) -> DenseMatrix {
    let otg = core.transpose_matmul(euclidean).expect("k x k shapes");
    let correction = core.matmul(&sym(&otg)).expect("k x k shapes");
    euclidean.sub(&correction).expect("k x k shapes")
}

/// Residual objective `‖U A Uᵀ‖²_resi` (core set `core_set`) for the rotation
/// with the given core on `idx`.
pub fn rotation_objective(a: &SymmetricMatrix, idx: &[usize], core: &DenseMatrix, core_set: &[usize]) -> f64 {
    RotationObjective::new(a, idx, core_set).value(core)
}

/// Riemannian gradient of [`rotation_objective`] at `core`.
pub fn stiefel_gradient(
    a: &SymmetricMatrix,
    idx: &[usize],
    core: &DenseMatrix,
    core_set: &[usize],
) -> DenseMatrix {
    let g = RotationObjective::new(a, idx, core_set).euclidean_gradient(core);
    riemannian_gradient(core, &g)
}

/// One steepest-descent step along `−grad`, retracted with the Cayley transform:
/// `O (I + τΩ/2)⁻¹ (I − τΩ/2)` where `Ω = skew(Oᵀ grad)`.
///
/// The result is orthogonal with the same determinant as `core`.
pub fn stiefel_descent_step(core: &DenseMatrix, grad: &DenseMatrix, step: f64) -> DenseMatrix {
    let k = core.rows();
    let otg = core.transpose_matmul(grad).expect("k x k shapes");
    let half = 0.5 * step;
    let mut plus = DenseMatrix::identity(k);
    let mut minus = DenseMatrix::identity(k);
    for i in 0..k {
        for j in 0..k {
            let omega = 0.5 * (otg.get(i, j) - otg.get(j, i));
            plus.set(i, j, plus.get(i, j) + half * omega);
            minus.set(i, j, minus.get(i, j) - half * omega);
        }
    }
    // I + S is invertible for skew S.
    let cayley = plus.solve(&minus).expect("I + skew is nonsingular");
    core.matmul(&cayley).expect("k x k shapes")
}
