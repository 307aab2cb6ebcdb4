//! Sparse affine adjacency: every node is reconstructed as an affine
//! combination of the others,
//!
//! ```text
//! minimize ‖X − X Âᵀ‖²_F + λ‖Â‖₁   subject to  Â 1 = 1,  diag(Â) = 0
//! ```
//!
//! with X holding one node per column. The problem separates over rows of Â:
//! row i solves `min ‖x_i − X a‖² + λ‖a‖₁` over `{a : Σ a = 1, a_i = 0}`.
//! Each row runs proximal gradient with backtracking; the proximal map of the
//! ℓ₁ term restricted to the affine set is computed exactly.

use rayon::prelude::*;

use super::{AdjacencyError, AdjacencyKind, AdjacencyMatrix, DEFAULT_LAMBDA_A};
use crate::sparse::DenseMatrix;

const POWER_ITERS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct LleConfig {
    pub lambda_a: f64,
    pub max_iters: usize,
    /// Stop once no entry moves by more than `tol` in an iteration.
    pub tol: f64,
    /// Initial step is `1 / (penalty_rho · 2‖XᵀX‖₂)`.
    pub penalty_rho: f64,
}

impl Default for LleConfig {
    fn default() -> Self {
        Self {
            lambda_a: DEFAULT_LAMBDA_A,
            max_iters: 2000,
            tol: 1e-12,
            penalty_rho: 1.0,
        }
    }
}

impl LleConfig {
    fn validate(&self) -> Result<(), AdjacencyError> {
        let bad = |m: String| Err(AdjacencyError::InvalidConfig(m));
        if !(self.lambda_a >= 0.0 && self.lambda_a.is_finite()) {
            return bad(format!("lambda_a = {} must be nonnegative", self.lambda_a));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        if !(self.penalty_rho > 0.0 && self.penalty_rho.is_finite()) {
            return bad(format!("penalty_rho = {} must be positive", self.penalty_rho));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LleResult {
    pub adjacency: AdjacencyMatrix,
    /// Composite objective at the start and after every iteration.
    pub objective: Vec<f64>,
    /// Largest constraint violation `max(|Σ_j Â_ij − 1|, |Â_ii|)` at the same points.
    pub violation: Vec<f64>,
}

/// `argmin_a ½‖a − v‖² + c‖a‖₁` subject to `Σ a = 1`, i.e.
/// `a_j = S_c(v_j + μ)` with the shift μ solving `Σ_j S_c(v_j + μ) = 1`.
fn prox_affine_l1(v: &[f64], c: f64) -> Vec<f64> {
    let soft = |x: f64| {
        if x > c {
            x - c
        } else if x < -c {
            x + c
        } else {
            0.0
        }
    };
    if v.len() == 1 {
        return vec![1.0];
    }
    let total = |mu: f64| v.iter().map(|&x| soft(x + mu)).sum::<f64>();
    // Σ S_c(v_j + μ) is piecewise linear and nondecreasing in μ, with kinks at −v_j ± c.
    let mut kinks: Vec<f64> = v.iter().flat_map(|&x| [-x - c, -x + c]).collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let values: Vec<f64> = kinks.iter().map(|&mu| total(mu)).collect();
    let mu = match values.iter().position(|&s| s >= 1.0) {
        Some(0) => {
            // Above the target already at the lowest kink: every coordinate is
            // on its negative branch there, slope = len.
            kinks[0] - (values[0] - 1.0) / v.len() as f64
        }
        Some(p) => {
            let (m0, m1, s0, s1) = (kinks[p - 1], kinks[p], values[p - 1], values[p]);
            if s1 == s0 {
                m0
            } else {
                m0 + (1.0 - s0) * (m1 - m0) / (s1 - s0)
            }
        }
        None => {
            let last = kinks.len() - 1;
            kinks[last] + (1.0 - values[last]) / v.len() as f64
        }
    };
    let mut a: Vec<f64> = v.iter().map(|&x| soft(x + mu)).collect();
    let support: Vec<usize> = (0..a.len()).filter(|&j| a[j] != 0.0).collect();
    if support.len() == 1 {
        a[support[0]] = 1.0;
    }
    a
}

struct RowProblem<'a> {
    gram: &'a DenseMatrix,
    target: usize,
    /// ‖x_i‖².
    energy: f64,
    lambda: f64,
}

impl RowProblem<'_> {
    /// Indices other than the target, the free coordinates.
    fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.gram.rows()).filter(move |&j| j != self.target)
    }

    /// ‖x_i − X a‖² = ‖x_i‖² − 2 gᵢᵀa + aᵀGa.
    fn smooth(&self, a: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (p, j) in self.others().enumerate() {
            lin += self.gram.get(self.target, j) * a[p];
            let mut ga = 0.0;
            for (q, l) in self.others().enumerate() {
                ga += self.gram.get(j, l) * a[q];
            }
            quad += a[p] * ga;
        }
        (self.energy - 2.0 * lin + quad).max(0.0)
    }

    fn gradient(&self, a: &[f64]) -> Vec<f64> {
        self.others()
            .map(|j| {
                let ga: f64 = self.others().enumerate().map(|(q, l)| self.gram.get(j, l) * a[q]).sum();
                2.0 * (ga - self.gram.get(self.target, j))
            })
            .collect()
    }

    fn objective(&self, a: &[f64]) -> f64 {
        self.smooth(a) + self.lambda * a.iter().map(|x| x.abs()).sum::<f64>()
    }
}

struct RowState {
    a: Vec<f64>,
    step: f64,
    converged: bool,
}

/// One proximal-gradient step with backtracking on the quadratic upper bound;
/// the accepted point never increases the composite objective.
fn row_step(problem: &RowProblem, state: &mut RowState, tol: f64) {
    if state.converged {
        return;
    }
    let f = problem.smooth(&state.a);
    let g = problem.gradient(&state.a);
    loop {
        let t = state.step;
        let v: Vec<f64> = state.a.iter().zip(&g).map(|(x, d)| x - t * d).collect();
        let next = prox_affine_l1(&v, t * problem.lambda);
        let diff: Vec<f64> = next.iter().zip(&state.a).map(|(x, y)| x - y).collect();
        let bound = f
            + g.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>()
            + diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * t);
        let f_next = problem.smooth(&next);
        let moved = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if f_next <= bound || moved <= tol {
            let worse = problem.objective(&next) > problem.objective(&state.a);
            if moved <= tol || worse {
                state.converged = true;
                if worse {
                    return;
                }
            }
            state.a = next;
            return;
        }
        state.step *= 0.5;
    }
}

fn spectral_norm_estimate(gram: &DenseMatrix) -> f64 {
    let n = gram.rows();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let w: Vec<f64> = (0..n).map(|i| gram.row(i).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Learns the sparse affine adjacency of the columns of `x` (T × N).
pub fn lle_adjacency(x: &DenseMatrix, cfg: &LleConfig) -> Result<LleResult, AdjacencyError> {
    cfg.validate()?;
    let (t, n) = x.shape();
    if n < 2 {
        return Err(AdjacencyError::TooSmall { what: "nodes", needed: 2, got: n });
    }
    if t < 2 {
        return Err(AdjacencyError::TooSmall { what: "timesteps", needed: 2, got: t });
    }
    if let Some(p) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(AdjacencyError::NonFinite { row: p / n, col: p % n });
    }
    let gram = x.transpose_matmul(x)?;
    let lipschitz = 2.0 * spectral_norm_estimate(&gram);
    let step0 = if lipschitz > 0.0 { 1.0 / (cfg.penalty_rho * lipschitz) } else { 1.0 };

    let problems: Vec<RowProblem> = (0..n)
        .map(|i| RowProblem { gram: &gram, target: i, energy: gram.get(i, i), lambda: cfg.lambda_a })
        .collect();
    let mut states: Vec<RowState> = (0..n)
        .map(|_| RowState { a: vec![1.0 / (n - 1) as f64; n - 1], step: step0, converged: false })
        .collect();

    let measure = |states: &[RowState]| -> (f64, f64) {
        let objective = problems.iter().zip(states).map(|(p, s)| p.objective(&s.a)).sum();
        let violation = states
            .iter()
            .map(|s| (s.a.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0f64, f64::max);
        (objective, violation)
    };
    let (f0, v0) = measure(&states);
    let mut objective = vec![f0];
    let mut violation = vec![v0];
    for _ in 0..cfg.max_iters {
        if states.iter().all(|s| s.converged) {
            break;
        }
        states
            .par_iter_mut()
            .zip(&problems)
            .for_each(|(s, p)| row_step(p, s, cfg.tol));
        let (f, v) = measure(&states);
        objective.push(f);
        violation.push(v);
    }

    let mut values = DenseMatrix::zeros(n, n);
    for (i, s) in states.iter().enumerate() {
        for (p, j) in problems[i].others().enumerate() {
            values.set(i, j, s.a[p]);
        }
    }
    Ok(LleResult {
        adjacency: AdjacencyMatrix::new(values, AdjacencyKind::Lle)?,
        objective,
        violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle: bisection on μ over a wide bracket.
    fn prox_oracle(v: &[f64], c: f64) -> Vec<f64> {
        let soft = |x: f64| x.signum() * (x.abs() - c).max(0.0);
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if v.iter().map(|&x| soft(x + mid)).sum::<f64>() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        v.iter().map(|&x| soft(x + 0.5 * (lo + hi))).collect()
    }

    #[test]
    fn prox_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let len = rng.gen_range(2..7);
            let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let c = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
            let got = prox_affine_l1(&v, c);
            let want = prox_oracle(&v, c);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-9, "{v:?} c={c}: {got:?} vs {want:?}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_nodes_are_forced() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let r = lle_adjacency(&x, &LleConfig::default()).unwrap();
        assert_eq!(
            r.adjacency.values(),
            &DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn recovers_affine_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 40;
        let x = DenseMatrix::from_fn(t, 3, |_, _| 0.0);
        let mut x = x;
        for r in 0..t {
            let (a, c): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            x.set(r, 0, a);
            x.set(r, 2, c);
            x.set(r, 1, 0.5 * (a + c));
        }
        let cfg = LleConfig { lambda_a: 0.0, ..LleConfig::default() };
        let r = lle_adjacency(&x, &cfg).unwrap();
        let row = r.adjacency.values().row(1);
        assert!((row[0] - 0.5).abs() <= 1e-3 && row[1] == 0.0 && (row[2] - 0.5).abs() <= 1e-3, "{row:?}");
    }

    #[test]
    fn constraints_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DenseMatrix::from_fn(30, 6, |_, _| rng.gen_range(-1.0..1.0));
        let r = lle_adjacency(&x, &LleConfig { lambda_a: 0.1, ..LleConfig::default() }).unwrap();
        assert!(r.violation.iter().all(|&v| v <= 1e-8));
        for w in r.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        for i in 0..6 {
            assert_eq!(r.adjacency.values().get(i, i), 0.0);
        }
    }

    #[test]
    fn larger_lambda_shrinks_l1_mass() {
        // Node 2 extrapolates nodes 0 and 1, so the unpenalized fit needs a
        // negative weight and carries more than the minimal ℓ₁ mass.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = DenseMatrix::from_fn(25, 5, |_, _| rng.gen_range(-1.0..1.0));
        for r in 0..25 {
            let v = 1.8 * x.get(r, 0) - 0.8 * x.get(r, 1) + 0.05 * rng.gen_range(-1.0..1.0);
            x.set(r, 2, v);
        }
        let l1 = |lambda: f64| {
            let r = lle_adjacency(&x, &LleConfig { lambda_a: lambda, ..LleConfig::default() }).unwrap();
            r.adjacency.values().as_slice().iter().map(|v| v.abs()).sum::<f64>()
        };
        let (free, mid, heavy) = (l1(0.0), l1(1.0), l1(100.0));
        assert!(mid < free && heavy <= mid, "{free} {mid} {heavy}");
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            lle_adjacency(&DenseMatrix::zeros(5, 1), &LleConfig::default()),
            Err(AdjacencyError::TooSmall { what: "nodes", .. })
        ));
        let mut x = DenseMatrix::zeros(3, 3);
        x.set(1, 2, f64::NAN);
        assert!(matches!(
            lle_adjacency(&x, &LleConfig::default()),
            Err(AdjacencyError::NonFinite { row: 1, col: 2 })
        ));
        assert!(lle_adjacency(&DenseMatrix::zeros(3, 3), &LleConfig { max_iters: 0, ..LleConfig::default() }).is_err());
    }
}
