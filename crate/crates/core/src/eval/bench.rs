use super::EvalError;
use crate::adjacency::laplacian;
use crate::forecast::{synthetic_diffusion, train, BasisOperator, ModelConfig, Seq2SeqModel, SyntheticConfig, TrainConfig};
use crate::mmf::{factorize, FactorizeConfig};
use crate::sparse::{DenseMatrix, SymmetricMatrix};
use crate::wavelet::extract_basis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

/// Unweighted k-nearest-neighbour graph on `n` uniform points in the unit
/// square, symmetrized (an edge exists if either end lists the other).
pub fn knn_graph(n: usize, k: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            w.set(i, j, 1.0);
            w.set(j, i, 1.0);
        }
    }
    SymmetricMatrix::new(w).expect("edges are set in both directions")
}

pub fn knn_laplacian(n: usize, k: usize, seed: u64) -> SymmetricMatrix {
    laplacian(&knn_graph(n, k, seed))
}

/// Eigenvectors of `a` as columns, from a dense symmetric eigensolver.
pub fn dense_eigenbasis(a: &SymmetricMatrix) -> DenseMatrix {
    let n = a.dim();
    let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
    let eig = nalgebra::SymmetricEigen::new(m);
    DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)])
}

/// Percentage of entries with magnitude above `tol`.
pub fn density_percent(m: &DenseMatrix, tol: f64) -> f64 {
    let total = m.rows() * m.cols();
    if total == 0 {
        return 0.0;
    }
    let nnz = m.as_slice().iter().filter(|v| v.abs() > tol).count();
    100.0 * nnz as f64 / total as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub nodes: usize,
    pub neighbors: usize,
    pub levels: usize,
    pub order_k: usize,
    /// Timed epochs per path.
    pub runs: usize,
    pub hidden: usize,
    pub layers: usize,
    pub history: usize,
    pub horizon: usize,
    /// Length of the synthetic series.
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            nodes: 512,
            neighbors: 4,
            levels: 256,
            order_k: 2,
            runs: 5,
            hidden: 4,
            layers: 2,
            history: 12,
            horizon: 3,
            steps: 60,
            batch: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub label: String,
    pub median_seconds_per_epoch: f64,
    pub runs: usize,
    /// Percent of nonzero entries in the basis this path multiplies by.
    pub nnz_density: f64,
    pub epoch_seconds: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Trains the same model on the same synthetic diffusion data twice, once
/// through the sparse wavelet basis and once through its densified copy, one
/// epoch per run, on a single thread.
pub fn bench_sparsity_and_speed(cfg: &BenchConfig) -> Result<(BenchResult, BenchResult), EvalError> {
    if cfg.runs < 5 {
        return Err(EvalError::Config(format!("at least 5 runs are needed, got {}", cfg.runs)));
    }
    let pipe = |e: &dyn std::fmt::Display| EvalError::Pipeline(e.to_string());
    let syn = synthetic_diffusion(&SyntheticConfig {
        nodes: cfg.nodes,
        steps: cfg.steps,
        neighbors: cfg.neighbors,
        seed: cfg.seed,
        ..SyntheticConfig::default()
    })
    .map_err(|e| pipe(&e))?;
    let f = factorize(&syn.laplacian, &FactorizeConfig::new(cfg.levels, cfg.order_k)).map_err(|e| pipe(&e))?;
    let w = extract_basis(&f, 0.0).map_err(|e| pipe(&e))?;
    let data = syn.dataset(cfg.history, cfg.horizon).map_err(|e| pipe(&e))?;
    let model_cfg = ModelConfig {
        nodes: cfg.nodes,
        hidden: cfg.hidden,
        layers: cfg.layers,
        history_len: cfg.history,
        horizon: cfg.horizon,
    };
    let train_cfg = TrainConfig {
        epochs: cfg.runs,
        hidden: cfg.hidden,
        layers: cfg.layers,
        batch: cfg.batch,
        seed: cfg.seed,
        threads: 1,
        ..TrainConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| pipe(&e))?;
    let dense_w = w.to_dense();
    let sparse_density = 100.0 * w.basis().nnz() as f64 / (cfg.nodes * cfg.nodes) as f64;
    let mut results = Vec::new();
    for (label, op, density) in [
        ("sparse", BasisOperator::sparse(&w), sparse_density),
        ("dense", BasisOperator::Dense(dense_w.clone()), 100.0),
    ] {
        let mut model = Seq2SeqModel::new(Arc::new(op), model_cfg, cfg.seed).map_err(|e| pipe(&e))?;
        let report = pool.install(|| train(&mut model, &data, &train_cfg)).map_err(|e| pipe(&e))?;
        let seconds: Vec<f64> = report.epochs.iter().map(|e| e.seconds).collect();
        results.push(BenchResult {
            label: label.to_string(),
            median_seconds_per_epoch: median(&seconds),
            runs: seconds.len(),
            nnz_density: density,
            epoch_losses: report.epochs.iter().map(|e| e.train_loss).collect(),
            epoch_seconds: seconds,
        });
    }
    let dense = results.pop().expect("two runs");
    let sparse = results.pop().expect("two runs");
    Ok((sparse, dense))
}

pub fn write_bench_csv<W: Write>(out: W, results: &[BenchResult]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: &dyn std::fmt::Display| EvalError::Pipeline(e.to_string());
    w.write_record(["label", "runs", "median_seconds_per_epoch", "nnz_density_percent"])
        .map_err(|e| err(&e))?;
    for r in results {
        w.write_record([
            r.label.clone(),
            r.runs.to_string(),
            format!("{:.6}", r.median_seconds_per_epoch),
            format!("{:.4}", r.nnz_density),
        ])
        .map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}

pub fn bench_table(results: &[BenchResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:>5} {:>14} {:>10}", "path", "runs", "median s/epoch", "nnz %");
    for r in results {
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>14.4} {:>10.3}",
            r.label, r.runs, r.median_seconds_per_epoch, r.nnz_density
        );
    }
    if let [a, b] = results {
        if a.median_seconds_per_epoch > 0.0 {
            let _ = writeln!(s, "speedup {:.2}x", b.median_seconds_per_epoch / a.median_seconds_per_epoch);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_graph_is_symmetric_with_min_degree() {
        let g = knn_graph(30, 3, 1);
        for i in 0..30 {
            let deg = g.row(i).iter().filter(|&&v| v == 1.0).count();
            assert!(deg >= 3);
            assert_eq!(g.get(i, i), 0.0);
        }
        assert_eq!(g, knn_graph(30, 3, 1));
        let l = knn_laplacian(30, 3, 1);
        for i in 0..30 {
            assert!(l.row(i).iter().sum::<f64>().abs() <= 1e-12);
        }
    }

    #[test]
    fn eigenbasis_is_orthogonal_and_diagonalizes() {
        let l = knn_laplacian(20, 3, 2);
        let v = dense_eigenbasis(&l);
        assert!(v.orthonormality_residual() <= 1e-10);
        let d = v.transpose().matmul(l.as_dense()).unwrap().matmul(&v).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    assert!(d.get(i, j).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn median_and_density() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(density_percent(&DenseMatrix::identity(4), 0.0), 25.0);
    }

    #[test]
    fn small_bench_paths_agree() {
        let cfg = BenchConfig {
            nodes: 16,
            levels: 8,
            hidden: 2,
            steps: 40,
            history: 4,
            horizon: 2,
            ..BenchConfig::default()
        };
        let (s, d) = bench_sparsity_and_speed(&cfg).unwrap();
        assert_eq!(s.runs, 5);
        for (a, b) in s.epoch_losses.iter().zip(&d.epoch_losses) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!(s.nnz_density < d.nnz_density);
        let table = bench_table(&[s.clone(), d.clone()]);
        assert!(table.contains("sparse") && table.contains("speedup"));
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &[s, d]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("label,runs,"));
        assert!(bench_sparsity_and_speed(&BenchConfig { runs: 4, ..cfg }).is_err());
    }
}
