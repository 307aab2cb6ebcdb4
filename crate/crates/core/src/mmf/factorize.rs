use log::debug;

use super::stiefel::{riemannian_gradient, RotationObjective};
use super::{
    stiefel_descent_step, CoreDiagonal, FactorizeConfig, GivensRotation, LevelTrace, MmfError,
    MmfFactorization, NestedIndexSets, RowSimilarity,
};
use crate::sparse::{conjugate_in_place, DenseMatrix, SymmetricMatrix};

// Armijo constant. At 0.5 an accepted step never overshoots the minimizer of a
// locally quadratic objective, so the backtracked step contracts at rate ≤ shrink.
const SUFFICIENT_DECREASE: f64 = 0.5;
const MAX_BACKTRACKS: usize = 64;

/// `sqrt(Σ |H_ij|²)` over `i ≠ j` with `(i, j) ∉ core × core`.
pub fn residual_norm(h: &SymmetricMatrix, core_indices: &[usize]) -> f64 {
    let n = h.dim();
    let mut in_core = vec![false; n];
    core_indices.iter().for_each(|&i| in_core[i] = true);
    let mut s = 0.0;
    for i in 0..n {
        for (j, v) in h.row(i).iter().enumerate() {
            if i != j && !(in_core[i] && in_core[j]) {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// Optimizes one rotation core from `start` by backtracking steepest descent
/// with Cayley retraction.
fn optimize_core(
    objective: &RotationObjective,
    start: DenseMatrix,
    cfg: &FactorizeConfig,
) -> (DenseMatrix, LevelTrace) {
    let mut core = start;
    let mut f = objective.variable(&core);
    let mut trace = LevelTrace {
        objective: vec![objective.constant() + f],
    };
    let scale = objective.scale();
    if scale == 0.0 {
        return (core, trace);
    }
    let base_step = cfg.step_size / scale;
    let mut step = base_step;
    for _ in 0..cfg.descent_iters {
        if f == 0.0 {
            break;
        }
        let grad = riemannian_gradient(&core, &objective.euclidean_gradient(&core));
        let g2: f64 = grad.as_slice().iter().map(|v| v * v).sum();
        if g2 == 0.0 {
            break;
        }
        // Warm start one notch above the last accepted step.
        let mut trial = (step / cfg.step_shrink).min(base_step * 1e6);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = stiefel_descent_step(&core, &grad, trial);
            let f_new = objective.variable(&candidate);
            if f_new < f && f_new <= f - SUFFICIENT_DECREASE * trial * g2 {
                accepted = Some((candidate, f_new));
                break;
            }
            trial *= cfg.step_shrink;
        }
        let Some((candidate, f_new)) = accepted else {
            break;
        };
        core = candidate;
        f = f_new;
        step = trial;
        trace.objective.push(objective.constant() + f);
    }
    (core, trace)
}

/// Identity followed by a 45° rotation in every coordinate plane. The identity
/// alone can sit on a stationary point, e.g. a 2×2 block with equal diagonal.
fn starting_cores(k: usize) -> Vec<DenseMatrix> {
    let mut starts = vec![DenseMatrix::identity(k)];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for p in 0..k {
        for q in p + 1..k {
            let mut o = DenseMatrix::identity(k);
            o.set(p, p, h);
            o.set(q, q, h);
            o.set(p, q, h);
            o.set(q, p, -h);
            starts.push(o);
        }
    }
    starts
}

/// Greedy level-by-level MMF of a symmetric matrix.
///
/// Each level selects k active indices by row similarity. For every slot of the
/// rotation and every starting core, the core is optimized so that the slot's
/// row has minimal off-diagonal energy within the active set; the best run is
/// kept. The rotated index whose row ends with the least energy is retired.
pub fn factorize(a: &SymmetricMatrix, cfg: &FactorizeConfig) -> Result<MmfFactorization, MmfError> {
    let n = a.dim();
    if n <= 1 {
        let core: Vec<usize> = (0..n).collect();
        return Ok(MmfFactorization {
            n,
            order_k: cfg.order,
            rotations: Vec::new(),
            index_sets: NestedIndexSets::new(n, Vec::new())?,
            h: CoreDiagonal::from_matrix(a, &core),
            residual: 0.0,
            trace: Vec::new(),
        });
    }
    cfg.validate(n)?;

    let k = cfg.order;
    let starts = starting_cores(k);
    let mut current = a.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut similarity = RowSimilarity::new(&current, &active);
    let mut rotations = Vec::with_capacity(cfg.levels);
    let mut retired = Vec::with_capacity(cfg.levels);
    let mut traces = Vec::with_capacity(cfg.levels);

    for level in 1..=cfg.levels {
        let idx = similarity.select(k)?;
        let mut best: Option<(f64, DenseMatrix, LevelTrace)> = None;
        for &slot in &idx {
            let core_set: Vec<usize> = active.iter().copied().filter(|&i| i != slot).collect();
            let objective = RotationObjective::new(&current, &idx, &core_set);
            for start in &starts {
                let (core, trace) = optimize_core(&objective, start.clone(), cfg);
                let value = *trace.objective.last().expect("trace holds the start");
                if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
                    best = Some((value, core, trace));
                }
            }
        }
        let (_, core, trace) = best.expect("at least one slot and start");

        conjugate_in_place(&mut current, &idx, &core)?;
        similarity.rotate(&idx, &core);

        let energy = |p: usize| -> f64 {
            active
                .iter()
                .filter(|&&j| j != p)
                .map(|&j| current.get(p, j).powi(2))
                .sum()
        };
        let wavelet = idx
            .iter()
            .copied()
            .map(|p| (p, energy(p)))
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
            .map(|(p, _)| p)
            .expect("k >= 2");
        active.retain(|&i| i != wavelet);
        similarity.retire(wavelet, &current);
        debug!(
            "level {level}: rotated {idx:?}, retired {wavelet}, objective {:e} -> {:e} in {} steps",
            trace.objective[0],
            trace.objective.last().copied().unwrap_or_default(),
            trace.objective.len() - 1
        );

        rotations.push(GivensRotation::new(level, idx, core)?);
        retired.push(wavelet);
        traces.push(trace);
    }

    let residual = residual_norm(&current, &active);
    Ok(MmfFactorization {
        n,
        order_k: k,
        rotations,
        index_sets: NestedIndexSets::new(n, retired)?,
        h: CoreDiagonal::from_matrix(&current, &active),
        residual,
        trace: traces,
    })
}

/// `U_1ᵀ … U_Lᵀ H U_L … U_1`, densified.
pub fn reconstruct(f: &MmfFactorization) -> SymmetricMatrix {
    let mut m = f.h.to_symmetric();
    for rot in f.rotations.iter().rev() {
        conjugate_in_place(&mut m, rot.index_set(), &rot.core().transpose())
            .expect("rotation indices lie within the factorization dimension");
    }
    m
}
