use super::ForecastError;
use crate::adjacency::{laplacian, row_normalize, AdjacencyKind, AdjacencyMatrix, ForecastDataset};
use crate::eval::knn_graph;
use crate::sparse::{DenseMatrix, SymmetricMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Damped random-walk diffusion on a k-NN graph:
/// `x(t) = ρ Ã x(t−1) + noise`, shifted by a constant offset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub steps: usize,
    pub neighbors: usize,
    pub damping: f64,
    pub noise: f64,
    pub offset: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 20,
            steps: 1000,
            neighbors: 3,
            damping: 0.99,
            noise: 1.0,
            offset: 20.0,
            burn_in: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDiffusion {
    /// steps × nodes.
    pub series: DenseMatrix,
    /// Row-stochastic transition Ã.
    pub transition: DenseMatrix,
    pub weights: SymmetricMatrix,
    pub laplacian: SymmetricMatrix,
}

impl SyntheticDiffusion {
    /// Wraps the series with a 0.7/0.2/0.1 chronological split.
    pub fn dataset(&self, history: usize, horizon: usize) -> Result<ForecastDataset, ForecastError> {
        let n = self.series.cols();
        let ids = (0..n).map(|i| format!("node{i}")).collect();
        ForecastDataset::new(self.series.clone(), ids, None, history, horizon, [0.7, 0.2, 0.1])
            .map_err(|e| ForecastError::Config(e.to_string()))
    }
}

pub fn synthetic_diffusion(cfg: &SyntheticConfig) -> Result<SyntheticDiffusion, ForecastError> {
    if cfg.nodes < 2 || cfg.neighbors == 0 || cfg.steps == 0 {
        return Err(ForecastError::Config("synthetic data needs 2+ nodes, 1+ neighbors and 1+ steps".into()));
    }
    if !(cfg.damping.abs() < 1.0 && cfg.noise >= 0.0) {
        return Err(ForecastError::Config("damping must lie in (-1, 1) and noise must be nonnegative".into()));
    }
    let weights = knn_graph(cfg.nodes, cfg.neighbors, cfg.seed);
    let adj = AdjacencyMatrix::new(weights.as_dense().clone(), AdjacencyKind::Custom)
        .map_err(|e| ForecastError::Config(e.to_string()))?;
    let transition = row_normalize(&adj);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let n = cfg.nodes;
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut series = DenseMatrix::zeros(cfg.steps, n);
    for t in 0..cfg.burn_in + cfg.steps {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let drift: f64 = transition.row(i).iter().zip(&x).map(|(a, v)| a * v).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                cfg.damping * drift + cfg.noise * e
            })
            .collect();
        x = next;
        if t >= cfg.burn_in {
            let row = series.row_mut(t - cfg.burn_in);
            row.iter_mut().zip(&x).for_each(|(r, v)| *r = cfg.offset + v);
        }
    }
    let laplacian = laplacian(&weights);
    Ok(SyntheticDiffusion {
        series,
        transition,
        weights,
        laplacian,
    })
}
