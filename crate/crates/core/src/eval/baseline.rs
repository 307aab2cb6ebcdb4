use super::EvalError;
use crate::adjacency::{ForecastDataset, Split};
use crate::sparse::DenseMatrix;

/// Per-phase means of the training span: the forecast for time `t` is the
/// average of all training observations at phase `t mod period`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoricalAverage {
    period: usize,
    profile: DenseMatrix,
}

impl HistoricalAverage {
    /// Fits on rows `0..train_len` of `series`.
    pub fn fit(series: &DenseMatrix, train_len: usize, period: usize) -> Result<Self, EvalError> {
        if period == 0 {
            return Err(EvalError::Config("period must be positive".into()));
        }
        let train_len = train_len.min(series.rows());
        if period > train_len {
            return Err(EvalError::Period { period, train: train_len });
        }
        let n = series.cols();
        let mut profile = DenseMatrix::zeros(period, n);
        let mut counts = vec![0usize; period];
        for t in 0..train_len {
            let phase = t % period;
            counts[phase] += 1;
            profile
                .row_mut(phase)
                .iter_mut()
                .zip(series.row(t))
                .for_each(|(p, v)| *p += v);
        }
        for (phase, &c) in counts.iter().enumerate() {
            profile.row_mut(phase).iter_mut().for_each(|p| *p /= c as f64);
        }
        Ok(Self { period, profile })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn profile(&self) -> &DenseMatrix {
        &self.profile
    }

    pub fn predict_at(&self, t: usize) -> &[f64] {
        self.profile.row(t % self.period)
    }

    /// Forecast rows `t..t + horizon`.
    pub fn predict(&self, t: usize, horizon: usize) -> DenseMatrix {
        DenseMatrix::from_fn(horizon, self.profile.cols(), |i, j| self.predict_at(t + i)[j])
    }
}

/// Historical-average forecasts for every window of `split`, paired with the
/// raw targets.
pub fn historical_average(
    data: &ForecastDataset,
    period: usize,
    split: Split,
) -> Result<Vec<(DenseMatrix, DenseMatrix)>, EvalError> {
    let series = data.series();
    let ha = HistoricalAverage::fit(series, data.split(Split::Train).end, period)?;
    let h = data.horizon();
    Ok(data
        .samples(split)
        .into_iter()
        .map(|t| {
            let truth = DenseMatrix::from_fn(h, series.cols(), |i, j| series.get(t + i, j));
            (ha.predict(t, h), truth)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::MetricAccumulator;

    fn column(vals: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(vals.len(), 1, |i, _| vals[i])
    }

    #[test]
    fn two_period_mean() {
        let ha = HistoricalAverage::fit(&column(&[1.0, 3.0, 3.0, 5.0]), 4, 2).unwrap();
        assert_eq!(ha.predict(4, 2).as_slice(), &[2.0, 4.0]);
        assert_eq!(ha.predict_at(7), &[4.0]);
    }

    #[test]
    fn constant_and_periodic_series() {
        let c = HistoricalAverage::fit(&column(&[7.5; 10]), 10, 3).unwrap();
        assert!(c.predict(11, 4).as_slice().iter().all(|&v| v == 7.5));
        let periodic: Vec<f64> = (0..60).map(|t| [2.0, 5.0, 1.0, 4.0][t % 4]).collect();
        let data = ForecastDataset::new(column(&periodic), vec!["a".into()], None, 4, 2, [0.7, 0.2, 0.1]).unwrap();
        let mut acc = MetricAccumulator::default();
        for (p, y) in historical_average(&data, 4, Split::Test).unwrap() {
            acc.add(&p, &y).unwrap();
        }
        assert_eq!(acc.finish(2).unwrap().mae, 0.0);
    }

    #[test]
    fn period_longer_than_training_span() {
        assert!(matches!(
            HistoricalAverage::fit(&column(&[1.0, 2.0, 3.0]), 3, 4),
            Err(EvalError::Period { period: 4, train: 3 })
        ));
        assert!(HistoricalAverage::fit(&column(&[1.0]), 1, 0).is_err());
    }
}
