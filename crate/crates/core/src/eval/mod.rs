//! Forecast metrics, the historical-average baseline and the sparse/dense
//! benchmark harness.

mod baseline;
mod bench;

pub use baseline::{historical_average, HistoricalAverage};
pub use bench::{
    bench_sparsity_and_speed, bench_table, dense_eigenbasis, density_percent, knn_graph, knn_laplacian, median,
    write_bench_csv, BenchConfig, BenchResult,
};

use crate::sparse::DenseMatrix;

/// Targets with `|y|` below this are left out of MAPE.
pub const MAPE_MIN_TARGET: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("eval-bench: shape mismatch: prediction {pred:?} vs truth {truth:?}")]
    Shape { pred: (usize, usize), truth: (usize, usize) },
    #[error("eval-bench: no values to score")]
    Empty,
    #[error("eval-bench: every target is below the MAPE threshold")]
    NoValidTargets,
    #[error("eval-bench: non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("eval-bench: period {period} is longer than the training span {train}")]
    Period { period: usize, train: usize },
    #[error("eval-bench: {0}")]
    Config(String),
    #[error("eval-bench: {0}")]
    Pipeline(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
    pub horizon: usize,
    /// Number of scored entries.
    pub n_samples: usize,
}

/// Running sums for MAE, RMSE and MAPE, so reports can be built from many
/// windows without stacking them.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    abs: f64,
    sq: f64,
    ape: f64,
    count: usize,
    ape_count: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: &DenseMatrix, truth: &DenseMatrix) -> Result<(), EvalError> {
        if pred.shape() != truth.shape() {
            return Err(EvalError::Shape {
                pred: pred.shape(),
                truth: truth.shape(),
            });
        }
        for (&p, &y) in pred.as_slice().iter().zip(truth.as_slice()) {
            if !p.is_finite() {
                return Err(EvalError::NonFinite("prediction"));
            }
            let e = (p - y).abs();
            self.abs += e;
            self.sq += e * e;
            self.count += 1;
            if y.abs() >= MAPE_MIN_TARGET {
                self.ape += e / y.abs();
                self.ape_count += 1;
            }
        }
        Ok(())
    }

    pub fn finish(&self, horizon: usize) -> Result<MetricReport, EvalError> {
        if self.count == 0 {
            return Err(EvalError::Empty);
        }
        if self.ape_count == 0 {
            return Err(EvalError::NoValidTargets);
        }
        let n = self.count as f64;
        let report = MetricReport {
            mae: self.abs / n,
            rmse: (self.sq / n).sqrt(),
            mape: 100.0 * self.ape / self.ape_count as f64,
            horizon,
            n_samples: self.count,
        };
        assert!(
            report.rmse >= report.mae * (1.0 - 1e-12),
            "rmse {} below mae {}",
            report.rmse,
            report.mae
        );
        Ok(report)
    }
}

/// MAE, RMSE and MAPE of `pred` against `truth` (both T' × n).
pub fn metrics(pred: &DenseMatrix, truth: &DenseMatrix) -> Result<MetricReport, EvalError> {
    let mut acc = MetricAccumulator::default();
    acc.add(pred, truth)?;
    acc.finish(pred.rows())
}
