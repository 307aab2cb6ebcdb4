use super::MmfError;
use crate::sparse::{conjugate_in_place, DenseMatrix, SymmetricMatrix};

/// Gram matrix of the active-submatrix rows, `G = M_SS M_SSᵀ`, kept current
/// across rotations and retirements.
///
/// Rotating on `I ⊆ S` maps `G ↦ U_S G U_Sᵀ`, so the Gram is conjugated by the
/// same k-point rotation. Retiring `p` removes column `p` from every row:
/// `G_ij -= M_ip M_jp`. Both updates avoid the O(d³) rebuild.
#[derive(Clone, Debug)]
pub struct RowSimilarity {
    active: Vec<bool>,
    gram: SymmetricMatrix,
}

impl RowSimilarity {
    pub fn new(m: &SymmetricMatrix, active: &[usize]) -> Self {
        let n = m.dim();
        let mut mask = vec![false; n];
        active.iter().for_each(|&i| mask[i] = true);
        let rows: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| active.iter().map(|&j| m.get(i, j)).collect())
            .collect();
        let mut gram = DenseMatrix::zeros(n, n);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate().skip(a) {
                let dot: f64 = rows[a].iter().zip(&rows[b]).map(|(x, y)| x * y).sum();
                gram.set(i, j, dot);
                gram.set(j, i, dot);
            }
        }
        Self {
            active: mask,
            gram: SymmetricMatrix::new(gram).expect("gram is symmetric by construction"),
        }
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    /// Applies the rotation `O` on `idx`, mirroring a conjugation of the matrix.
    pub(crate) fn rotate(&mut self, idx: &[usize], core: &DenseMatrix) {
        conjugate_in_place(&mut self.gram, idx, core).expect("indices validated by caller");
    }

    /// Drops `p` from the active set. `m` is the matrix after the level's rotation.
    pub(crate) fn retire(&mut self, p: usize, m: &SymmetricMatrix) {
        self.active[p] = false;
        let active = self.active();
        let col: Vec<f64> = active.iter().map(|&i| m.get(i, p)).collect();
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate().skip(a) {
                let v = self.gram.get(i, j) - col[a] * col[b];
                self.gram.set_pair(i, j, v);
            }
        }
        // Diagonal is refreshed exactly so cancellation cannot accumulate in the norms.
        for &i in &active {
            let norm2: f64 = active.iter().map(|&j| m.get(i, j).powi(2)).sum();
            self.gram.set_pair(i, i, norm2);
        }
    }

    fn cosine(&self, i: usize, j: usize) -> f64 {
        let denom = (self.gram.get(i, i) * self.gram.get(j, j)).sqrt();
        if denom > 0.0 {
            (self.gram.get(i, j) / denom).abs()
        } else {
            0.0
        }
    }

    /// Picks `i*` with the largest best-partner |cosine|, then the k−1 rows
    /// most similar to it. Ties go to the lowest index.
    pub fn select(&self, k: usize) -> Result<Vec<usize>, MmfError> {
        let active = self.active();
        if active.len() < k || k == 0 {
            return Err(MmfError::TooFewActive {
                active: active.len(),
                k,
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for &i in &active {
            let score = active
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| self.cosine(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (pivot, _) = best.expect("active set is non-empty");
        let mut partners: Vec<(usize, f64)> = active
            .iter()
            .filter(|&&j| j != pivot)
            .map(|&j| (j, self.cosine(pivot, j)))
            .collect();
        partners.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        let mut out = Vec::with_capacity(k);
        out.push(pivot);
        out.extend(partners.iter().take(k - 1).map(|&(j, _)| j));
        Ok(out)
    }
}

/// Row-similarity index selection on the active submatrix of `a`.
///
/// Returns `k` distinct indices from `active`: first the row whose largest
/// absolute cosine similarity to another active row is maximal, then the rows
/// most cosine-similar to it.
pub fn select_indices(a: &SymmetricMatrix, active: &[usize], k: usize) -> Result<Vec<usize>, MmfError> {
    if active.len() < k {
        return Err(MmfError::TooFewActive {
            active: active.len(),
            k,
        });
    }
    RowSimilarity::new(a, active).select(k)
}
