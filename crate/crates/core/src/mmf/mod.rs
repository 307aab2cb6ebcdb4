//! Multiresolution Matrix Factorization.
//!
//! A symmetric `A` is compressed level by level: at level ℓ a k-point rotation
//! `U_ℓ = I ⊕_I O_ℓ` acts on k coordinates picked from the active set
//! `S_{ℓ-1}`, after which one coordinate (the wavelet index of that level) is
//! retired. After L levels
//!
//! ```text
//! A ≈ U_1ᵀ … U_Lᵀ H U_L … U_1
//! ```
//!
//! with `H` core-diagonal on `S_L`: dense on `S_L × S_L`, diagonal elsewhere.
//! The index sets come from a row-similarity heuristic ([`select_indices`]) and
//! each core `O_ℓ` is optimized on SO(k) by steepest descent with a Cayley
//! retraction ([`stiefel_gradient`], [`stiefel_descent_step`]).

mod factorize;
pub mod io;
mod select;
mod stiefel;

pub use factorize::{factorize, reconstruct, residual_norm};
pub use select::{select_indices, RowSimilarity};
pub use stiefel::{riemannian_gradient, rotation_objective, stiefel_descent_step, stiefel_gradient};

use crate::sparse::{DenseMatrix, SparseError, SymmetricMatrix};

#[derive(Debug, thiserror::Error)]
pub enum MmfError {
    #[error("mmf: invalid config: {0}")]
    InvalidConfig(String),
    #[error("mmf: fewer than {k} active indices ({active})")]
    TooFewActive { active: usize, k: usize },
    #[error("mmf: invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("mmf: invalid factorization: {0}")]
    InvalidFactorization(String),
    #[error("mmf: parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Maximum deviation `‖OᵀO − I‖∞` accepted for a rotation core.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
const DETERMINANT_TOL: f64 = 1e-8;

/// k-point rotation `I_{n-k} ⊕_I O` with `O ∈ SO(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GivensRotation {
    level: usize,
    index_set: Vec<usize>,
    core: DenseMatrix,
}

impl GivensRotation {
    pub fn new(level: usize, index_set: Vec<usize>, core: DenseMatrix) -> Result<Self, MmfError> {
        let k = index_set.len();
        if core.shape() != (k, k) {
            return Err(MmfError::InvalidRotation(format!(
                "core is {:?} for {k} indices",
                core.shape()
            )));
        }
        let mut sorted = index_set.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(MmfError::InvalidRotation(format!(
                "repeated index in {index_set:?}"
            )));
        }
        let orth = core.orthonormality_residual();
        if orth > ORTHOGONALITY_TOL {
            return Err(MmfError::InvalidRotation(format!(
                "core is not orthogonal (residual {orth:e})"
            )));
        }
        let det = core.determinant();
        if (det - 1.0).abs() > DETERMINANT_TOL {
            return Err(MmfError::InvalidRotation(format!(
                "core determinant {det} is not +1"
            )));
        }
        Ok(Self {
            level,
            index_set,
            core,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    pub fn core(&self) -> &DenseMatrix {
        &self.core
    }

    pub fn order(&self) -> usize {
        self.index_set.len()
    }

    /// The inverse rotation `Uᵀ`.
    pub fn transposed(&self) -> GivensRotation {
        GivensRotation {
            level: self.level,
            index_set: self.index_set.clone(),
            core: self.core.transpose(),
        }
    }

    /// Dense `n × n` form, for oracles and small problems.
    pub fn to_dense(&self, n: usize) -> DenseMatrix {
        let mut u = DenseMatrix::identity(n);
        for (a, &i) in self.index_set.iter().enumerate() {
            for (b, &j) in self.index_set.iter().enumerate() {
                u.set(i, j, self.core.get(a, b));
            }
        }
        u
    }
}

/// `S_0 = [n] ⊋ S_1 ⊋ … ⊋ S_L`, one retired coordinate per level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestedIndexSets {
    n: usize,
    retired: Vec<usize>,
}

impl NestedIndexSets {
    pub fn new(n: usize, retired: Vec<usize>) -> Result<Self, MmfError> {
        let mut seen = vec![false; n];
        for &r in &retired {
            if r >= n || std::mem::replace(&mut seen[r], true) {
                return Err(MmfError::InvalidFactorization(format!(
                    "retired index {r} is out of range or repeated"
                )));
            }
        }
        if n > 0 && retired.len() >= n {
            return Err(MmfError::InvalidFactorization(
                "final active set must keep at least one index".into(),
            ));
        }
        Ok(Self { n, retired })
    }

    pub fn levels(&self) -> usize {
        self.retired.len()
    }

    /// Coordinate retired at level `ℓ` (1-based).
    pub fn retired_at(&self, level: usize) -> usize {
        self.retired[level - 1]
    }

    pub fn retired(&self) -> &[usize] {
        &self.retired
    }

    /// `S_ℓ` in ascending order.
    pub fn set(&self, level: usize) -> Vec<usize> {
        let mut gone = vec![false; self.n];
        self.retired[..level].iter().for_each(|&r| gone[r] = true);
        (0..self.n).filter(|&i| !gone[i]).collect()
    }

    pub fn final_set(&self) -> Vec<usize> {
        self.set(self.levels())
    }

    /// `d_ℓ = |S_ℓ|` for ℓ = 0..=L.
    pub fn dims(&self) -> Vec<usize> {
        (0..=self.levels()).map(|l| self.n - l).collect()
    }
}

/// `S`-core-diagonal symmetric matrix: a dense block on `S` plus a diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreDiagonal {
    n: usize,
    core_indices: Vec<usize>,
    core_block: DenseMatrix,
    diagonal: Vec<f64>,
}

impl CoreDiagonal {
    /// Keeps the core-diagonal pattern of `m` and drops every other entry.
    pub fn from_matrix(m: &SymmetricMatrix, core_indices: &[usize]) -> Self {
        let n = m.dim();
        let core_block = DenseMatrix::from_fn(core_indices.len(), core_indices.len(), |a, b| {
            m.get(core_indices[a], core_indices[b])
        });
        Self {
            n,
            core_indices: core_indices.to_vec(),
            core_block,
            diagonal: (0..n).map(|i| m.get(i, i)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn core_indices(&self) -> &[usize] {
        &self.core_indices
    }

    pub fn core_block(&self) -> &DenseMatrix {
        &self.core_block
    }

    /// Full diagonal of `H`; outside the core these are the wavelet frequencies.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn to_symmetric(&self) -> SymmetricMatrix {
        let mut m = SymmetricMatrix::from_diagonal(&self.diagonal);
        for (a, &i) in self.core_indices.iter().enumerate() {
            for (b, &j) in self.core_indices.iter().enumerate().skip(a) {
                m.set_pair(i, j, self.core_block.get(a, b));
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Similarity {
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizeConfig {
    pub levels: usize,
    pub order: usize,
    pub descent_iters: usize,
    /// Initial trial step, relative to the squared norm of the rotated rows.
    pub step_size: f64,
    pub step_shrink: f64,
    pub similarity: Similarity,
}

impl FactorizeConfig {
    pub fn new(levels: usize, order: usize) -> Self {
        Self {
            levels,
            order,
            descent_iters: 100,
            step_size: 1.0,
            step_shrink: 0.5,
            similarity: Similarity::Cosine,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), MmfError> {
        let bad = |m: String| Err(MmfError::InvalidConfig(m));
        if self.order < 2 {
            return bad(format!("order k = {} must be at least 2", self.order));
        }
        if self.order > n {
            return bad(format!("order k = {} exceeds dimension {n}", self.order));
        }
        if self.levels > n - 1 {
            return bad(format!("levels L = {} exceeds n - 1 = {}", self.levels, n - 1));
        }
        // Level ℓ rotates k indices of S_{ℓ-1}, which holds n - ℓ + 1 indices.
        if self.levels > 0 && n + 1 - self.levels < self.order {
            return bad(format!(
                "level {} would have {} active indices, fewer than k = {}",
                self.levels,
                n + 1 - self.levels,
                self.order
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size {} must be positive", self.step_size));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad(format!("step shrink {} must lie in (0, 1)", self.step_shrink));
        }
        Ok(())
    }
}

/// Objective values of one level's core optimization: the starting value
/// followed by the value after every accepted descent step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelTrace {
    pub objective: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmfFactorization {
    pub n: usize,
    pub order_k: usize,
    pub rotations: Vec<GivensRotation>,
    pub index_sets: NestedIndexSets,
    pub h: CoreDiagonal,
    pub residual: f64,
    /// Per-level descent history. Not serialized.
    pub trace: Vec<LevelTrace>,
}

impl MmfFactorization {
    pub fn levels(&self) -> usize {
        self.rotations.len()
    }
}
