use std::ops::Range;
use std::path::Path;

use super::AdjacencyError;
use crate::sparse::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// A multivariate series (T timesteps × N nodes) with a chronological
/// train/val/test split and per-node z-score statistics fitted on train.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastDataset {
    series: DenseMatrix,
    normalized: DenseMatrix,
    node_ids: Vec<String>,
    timestamps: Option<Vec<String>>,
    history_len: usize,
    horizon: usize,
    splits: [Range<usize>; 3],
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn boundary(ratio: f64, t: usize) -> usize {
    // The small slack keeps products like 0.7·100 = 70.00000000000001 and
    // 0.29·100 = 28.999999999999996 on their intended integers.
    ((ratio * t as f64) + 1e-9).floor() as usize
}

impl ForecastDataset {
    /// `ratios` are (train, val, test); the test split takes whatever remains
    /// after the floored train and val sizes.
    pub fn new(
        series: DenseMatrix,
        node_ids: Vec<String>,
        timestamps: Option<Vec<String>>,
        history_len: usize,
        horizon: usize,
        ratios: [f64; 3],
    ) -> Result<Self, AdjacencyError> {
        let (t, n) = series.shape();
        if node_ids.len() != n {
            return Err(AdjacencyError::InvalidAdjacency(format!(
                "{} node ids for {n} columns",
                node_ids.len()
            )));
        }
        if let Some(p) = series.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(AdjacencyError::NonFinite { row: p / n, col: p % n });
        }
        let needed = history_len + horizon + 1;
        if t < needed {
            return Err(AdjacencyError::TooSmall { what: "timesteps", needed, got: t });
        }
        if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6 || ratios[0] == 0.0 {
            return Err(AdjacencyError::InvalidRatios(ratios));
        }
        let train_end = boundary(ratios[0], t);
        let val_end = (train_end + boundary(ratios[1], t)).min(t);
        if train_end == 0 {
            return Err(AdjacencyError::InvalidRatios(ratios));
        }
        let splits = [0..train_end, train_end..val_end, val_end..t];

        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for j in 0..n {
            let col: Vec<f64> = (0..train_end).map(|i| series.get(i, j)).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
            if var.sqrt() == 0.0 || col.iter().all(|&v| v == col[0]) {
                return Err(AdjacencyError::ConstantNode(node_ids[j].clone()));
            }
            mean[j] = m;
            std[j] = var.sqrt();
        }
        let normalized = DenseMatrix::from_fn(t, n, |i, j| (series.get(i, j) - mean[j]) / std[j]);
        Ok(Self {
            series,
            normalized,
            node_ids,
            timestamps,
            history_len,
            horizon,
            splits,
            mean,
            std,
        })
    }

    pub fn len(&self) -> usize {
        self.series.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> usize {
        self.series.cols()
    }

    pub fn series(&self) -> &DenseMatrix {
        &self.series
    }

    pub fn normalized(&self) -> &DenseMatrix {
        &self.normalized
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn split(&self, s: Split) -> Range<usize> {
        self.splits[s as usize].clone()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// First target index of every window whose targets lie inside the split.
    /// The history may reach back into the preceding split.
    pub fn samples(&self, s: Split) -> Vec<usize> {
        let r = self.split(s);
        let start = r.start.max(self.history_len);
        if r.end < self.horizon {
            return Vec::new();
        }
        (start..=r.end - self.horizon).filter(|&t| t + self.horizon <= r.end).collect()
    }

    /// Normalized history (history_len × N) and targets (horizon × N) around
    /// first target index `t`.
    pub fn window(&self, t: usize) -> (DenseMatrix, DenseMatrix) {
        let n = self.nodes();
        let h = DenseMatrix::from_fn(self.history_len, n, |i, j| self.normalized.get(t - self.history_len + i, j));
        let y = DenseMatrix::from_fn(self.horizon, n, |i, j| self.normalized.get(t + i, j));
        (h, y)
    }

    /// Maps normalized values of node `j` back to the original scale.
    pub fn denormalize(&self, m: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * self.std[j] + self.mean[j])
    }
}

fn is_timestamp_header(h: &str) -> bool {
    matches!(
        h.trim().to_ascii_lowercase().as_str(),
        "timestamp" | "time" | "date" | "datetime"
    )
}

/// Parses CSV text: a header of node ids, then one row per timestep. A first
/// column named like a timestamp, or holding non-numeric values, is kept as
/// timestamps and excluded from the series.
pub fn parse_series(
    text: &str,
    history_len: usize,
    horizon: usize,
    ratios: [f64; 3],
) -> Result<ForecastDataset, AdjacencyError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let perr = |record: usize, message: String| AdjacencyError::Parse { record, message };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| perr(0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let records: Vec<csv::StringRecord> = reader
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| perr(i + 1, e.to_string())))
        .collect::<Result<_, _>>()?;
    let has_timestamps = header.first().is_some_and(|h| is_timestamp_header(h))
        || records
            .first()
            .and_then(|r| r.get(0))
            .is_some_and(|v| v.parse::<f64>().is_err());
    let skip = usize::from(has_timestamps);
    let node_ids: Vec<String> = header[skip.min(header.len())..].to_vec();
    if node_ids.is_empty() {
        return Err(perr(0, "header names no nodes".into()));
    }
    let n = node_ids.len();
    let mut values = Vec::with_capacity(records.len() * n);
    let mut timestamps = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.len() != n + skip {
            return Err(perr(i + 1, format!("expected {} fields, got {}", n + skip, r.len())));
        }
        if has_timestamps {
            timestamps.push(r[0].to_string());
        }
        for (j, field) in r.iter().skip(skip).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|e| perr(i + 1, format!("node `{}`: `{field}`: {e}", node_ids[j])))?;
            values.push(v);
        }
    }
    let series = DenseMatrix::from_vec(records.len(), n, values)
        .map_err(|e| perr(0, e.to_string()))?;
    ForecastDataset::new(series, node_ids, has_timestamps.then_some(timestamps), history_len, horizon, ratios)
}

pub fn load_series(
    path: &Path,
    history_len: usize,
    horizon: usize,
    ratios: [f64; 3],
) -> Result<ForecastDataset, AdjacencyError> {
    let text = std::fs::read_to_string(path)?;
    parse_series(&text, history_len, horizon, ratios)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(t: usize, n: usize, timestamps: bool) -> String {
        let mut s = String::new();
        if timestamps {
            s.push_str("timestamp,");
        }
        s.push_str(&(0..n).map(|j| format!("s{j}")).collect::<Vec<_>>().join(","));
        s.push('\n');
        for i in 0..t {
            if timestamps {
                s.push_str(&format!("2024-01-01T00:{:02}:00,", i % 60));
            }
            let row: Vec<String> = (0..n).map(|j| format!("{}", ((i * (j + 2)) % 17) as f64 + 0.5 * j as f64)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    #[test]
    fn split_sizes() {
        let d = parse_series(&csv(100, 3, false), 12, 3, [0.7, 0.2, 0.1]).unwrap();
        assert_eq!(d.split(Split::Train), 0..70);
        assert_eq!(d.split(Split::Val), 70..90);
        assert_eq!(d.split(Split::Test), 90..100);
        assert!(d.timestamps().is_none());
        let d = parse_series(&csv(100, 3, false), 2, 1, [0.29, 0.31, 0.4]).unwrap();
        assert_eq!(d.split(Split::Train), 0..29);
        assert_eq!(d.split(Split::Val), 29..60);
    }

    #[test]
    fn timestamps_are_detected_and_kept() {
        let d = parse_series(&csv(30, 2, true), 3, 2, [0.7, 0.2, 0.1]).unwrap();
        assert_eq!(d.nodes(), 2);
        assert_eq!(d.node_ids(), &["s0", "s1"]);
        assert_eq!(d.timestamps().unwrap()[1], "2024-01-01T00:01:00");
        let text = "when,a,b\nmon,1,2\ntue,2,1\nwed,3,5\nthu,1,1\nfri,0,2\n";
        let d = parse_series(text, 1, 1, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!(d.node_ids(), &["a", "b"]);
    }

    #[test]
    fn normalization_fitted_on_train() {
        let d = parse_series(&csv(100, 4, false), 12, 3, [0.7, 0.2, 0.1]).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..70).map(|i| d.normalized().get(i, j)).collect();
            let m = col.iter().sum::<f64>() / 70.0;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 70.0).sqrt();
            assert!(m.abs() <= 1e-10 && (s - 1.0).abs() <= 1e-10);
        }
        let back = d.denormalize(d.normalized());
        assert!(back.sub(d.series()).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn rejections() {
        let constant = "a,b\n1,2\n1,3\n1,4\n1,2\n1,5\n1,6\n1,1\n1,0\n1,2\n1,3\n";
        assert!(matches!(
            parse_series(constant, 2, 1, [0.7, 0.2, 0.1]),
            Err(AdjacencyError::ConstantNode(ref s)) if s == "a"
        ));
        assert!(matches!(
            parse_series(&csv(10, 2, false), 8, 3, [0.7, 0.2, 0.1]),
            Err(AdjacencyError::TooSmall { .. })
        ));
        assert!(matches!(
            parse_series("a,b\n1,2\n3\n", 1, 1, [0.7, 0.2, 0.1]),
            Err(AdjacencyError::Parse { .. })
        ));
        assert!(matches!(
            parse_series("a,b\n1,x\n3,4\n", 1, 1, [0.7, 0.2, 0.1]),
            Err(AdjacencyError::Parse { record: 1, .. })
        ));
        assert!(matches!(
            parse_series(&csv(50, 2, false), 2, 1, [0.7, 0.7, 0.1]),
            Err(AdjacencyError::InvalidRatios(_))
        ));
    }

    #[test]
    fn sample_windows_stay_in_split() {
        let d = parse_series(&csv(100, 2, false), 12, 3, [0.7, 0.2, 0.1]).unwrap();
        let train = d.samples(Split::Train);
        assert_eq!(train.first(), Some(&12));
        assert_eq!(train.last(), Some(&67));
        assert_eq!(d.samples(Split::Test), (90..=97).collect::<Vec<_>>());
        let (h, y) = d.window(20);
        assert_eq!(h.shape(), (12, 2));
        assert_eq!(y.row(0), d.normalized().row(20));
        assert_eq!(h.row(11), d.normalized().row(19));
    }
}
