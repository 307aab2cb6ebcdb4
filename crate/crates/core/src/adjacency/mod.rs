//! Graph construction: thresholded Gaussian kernels over sensor distances,
//! symmetrization, right-stochastic normalization, sparse affine (LLE-style)
//! adjacency learned from the series themselves, and series loading.

mod dataset;
mod lle;

pub use dataset::{load_series, parse_series, ForecastDataset, Split};
pub use lle::{lle_adjacency, LleConfig, LleResult};

use crate::sparse::io::{content_lines, read_triplets};
use crate::sparse::{DenseMatrix, SparseError, SymmetricMatrix};

/// Default kernel threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.01;
/// Default ℓ₁ weight of the affine adjacency.
pub const DEFAULT_LAMBDA_A: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum AdjacencyError {
    #[error("graph-adjacency: threshold {0} must be positive")]
    InvalidThreshold(f64),
    #[error("graph-adjacency: all finite distances are identical, kernel width is zero")]
    ZeroSigma,
    #[error("graph-adjacency: invalid distance table: {0}")]
    InvalidDistances(String),
    #[error("graph-adjacency: invalid adjacency: {0}")]
    InvalidAdjacency(String),
    #[error("graph-adjacency: invalid LLE config: {0}")]
    InvalidConfig(String),
    #[error("graph-adjacency: need at least {needed} {what}, got {got}")]
    TooSmall { what: &'static str, needed: usize, got: usize },
    #[error("graph-adjacency: non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("graph-adjacency: node `{0}` is constant over the training split")]
    ConstantNode(String),
    #[error("graph-adjacency: invalid split ratios {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("graph-adjacency: series parse error at record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error("graph-adjacency: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph-adjacency: {0}")]
    Sparse(#[from] SparseError),
}

/// Directed pairwise distances. Unreachable pairs hold `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<f64>,
}

impl DistanceTable {
    /// `dist` is row-major `n × n`.
    pub fn new(n: usize, dist: Vec<f64>) -> Result<Self, AdjacencyError> {
        if dist.len() != n * n {
            return Err(AdjacencyError::InvalidDistances(format!(
                "{} values for a {n}x{n} table",
                dist.len()
            )));
        }
        for (p, &d) in dist.iter().enumerate() {
            let (i, j) = (p / n, p % n);
            if d.is_nan() || d < 0.0 {
                return Err(AdjacencyError::InvalidDistances(format!("distance {d} at ({i}, {j})")));
            }
            if i == j && d != 0.0 {
                return Err(AdjacencyError::InvalidDistances(format!("self distance {d} at node {i}")));
            }
        }
        Ok(Self { n, dist })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AdjacencyError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(AdjacencyError::InvalidDistances("rows are not all of length n".into()));
        }
        Self::new(n, rows.concat())
    }

    /// Reads the sparse matrix format; pairs without an entry are unreachable.
    /// Explicit zero distances are kept.
    pub fn parse(text: &str) -> Result<Self, AdjacencyError> {
        let mut lines = content_lines(text);
        let (n, m, triplets) = read_triplets(&mut lines)?;
        if let Some((line, l)) = lines.next() {
            return Err(SparseError::Parse {
                line,
                message: format!("unexpected trailing content `{l}`"),
            }
            .into());
        }
        if n != m {
            return Err(AdjacencyError::InvalidDistances(format!("table is {n}x{m}")));
        }
        let mut dist: Vec<f64> = (0..n * n).map(|p| if p / n == p % n { 0.0 } else { f64::INFINITY }).collect();
        let mut seen = vec![false; n * n];
        for (i, j, d) in triplets {
            if i >= n || j >= n {
                return Err(SparseError::IndexOutOfRange { row: i, col: j, rows: n, cols: n }.into());
            }
            if std::mem::replace(&mut seen[i * n + j], true) {
                return Err(SparseError::Duplicate { row: i, col: j }.into());
            }
            dist[i * n + j] = d;
        }
        Self::new(n, dist)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// Population standard deviation of the finite off-diagonal distances.
    pub fn sigma(&self) -> f64 {
        let n = self.n;
        let finite: Vec<f64> = (0..n * n)
            .filter(|p| p / n != p % n)
            .map(|p| self.dist[p])
            .filter(|d| d.is_finite())
            .collect();
        if finite.is_empty() {
            return 0.0;
        }
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let var = finite.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / finite.len() as f64;
        var.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjacencyKind {
    Gaussian,
    Lle,
    Custom,
}

/// Nonnegative, finite, square edge weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    values: DenseMatrix,
    kind: AdjacencyKind,
}

impl AdjacencyMatrix {
    pub fn new(values: DenseMatrix, kind: AdjacencyKind) -> Result<Self, AdjacencyError> {
        let (n, m) = values.shape();
        if n != m {
            return Err(AdjacencyError::InvalidAdjacency(format!("matrix is {n}x{m}")));
        }
        for i in 0..n {
            for (j, &v) in values.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(AdjacencyError::NonFinite { row: i, col: j });
                }
                if v < 0.0 && kind != AdjacencyKind::Lle {
                    return Err(AdjacencyError::InvalidAdjacency(format!(
                        "negative weight {v} at ({i}, {j})"
                    )));
                }
            }
            if kind == AdjacencyKind::Lle && values.get(i, i) != 0.0 {
                return Err(AdjacencyError::InvalidAdjacency(format!(
                    "affine adjacency has nonzero diagonal at {i}"
                )));
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn kind(&self) -> AdjacencyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `A_ij = exp(−dist(i, j)/σ²)` where `dist(i, j) ≤ threshold`, else 0, with σ
/// the standard deviation of the finite off-diagonal distances (computed before
/// thresholding). The distance enters unsquared.
pub fn gaussian_adjacency(d: &DistanceTable, threshold: f64) -> Result<AdjacencyMatrix, AdjacencyError> {
    if !(threshold > 0.0) {
        return Err(AdjacencyError::InvalidThreshold(threshold));
    }
    let sigma = d.sigma();
    if sigma == 0.0 {
        return Err(AdjacencyError::ZeroSigma);
    }
    let n = d.len();
    let values = DenseMatrix::from_fn(n, n, |i, j| {
        let dist = d.get(i, j);
        if dist <= threshold {
            (-dist / (sigma * sigma)).exp()
        } else {
            0.0
        }
    });
    AdjacencyMatrix::new(values, AdjacencyKind::Gaussian)
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &AdjacencyMatrix) -> SymmetricMatrix {
    SymmetricMatrix::symmetrized(&a.values).expect("adjacency is square")
}

/// Divides each row by its sum. A row summing to zero becomes a self-loop.
pub fn row_normalize(a: &AdjacencyMatrix) -> DenseMatrix {
    let n = a.len();
    let mut out = a.values.clone();
    for i in 0..n {
        let row = out.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[i] = 1.0;
        }
    }
    out
}

/// Laplacian `D − A` of a symmetric weight matrix.
pub fn laplacian(a: &SymmetricMatrix) -> SymmetricMatrix {
    let n = a.dim();
    let mut l = a.as_dense().scale(-1.0);
    for i in 0..n {
        let degree: f64 = a.row(i).iter().sum();
        l.set(i, i, degree - a.get(i, i));
    }
    SymmetricMatrix::new(l).expect("negated symmetric matrix with a new diagonal stays symmetric")
}
