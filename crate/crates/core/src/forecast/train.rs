use super::model::{ModelParams, Seq2SeqModel, TrainMode};
use super::ForecastError;
use crate::adjacency::{ForecastDataset, Split};
use crate::eval::{MetricAccumulator, MetricReport};
use crate::sparse::DenseMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub dropout: f64,
    pub batch: usize,
    pub layers: usize,
    pub hidden: usize,
    /// Diffusion steps of the diffusion-convolution baseline.
    pub diffusion_steps_k: usize,
    pub sampling_tau: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Worker threads for per-sample passes. 1 keeps everything on the
    /// calling thread.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            lr_decay: 0.1,
            lr_decay_every: 20,
            dropout: 0.1,
            batch: 64,
            layers: 2,
            hidden: 64,
            diffusion_steps_k: 2,
            sampling_tau: 2000.0,
            epochs: 100,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |what: &str| Err(ForecastError::Config(what.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_decay_every == 0 {
            return bad("lr decay must lie in (0, 1] with a positive period");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch == 0 || self.layers == 0 || self.hidden == 0 || self.diffusion_steps_k == 0 || self.threads == 0 {
            return bad("batch, layers, hidden, diffusion steps and threads must be positive");
        }
        if !(self.sampling_tau > 0.0 && self.sampling_tau.is_finite()) {
            return bad("sampling tau must be positive");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(like: &ModelParams) -> Self {
        let mut m = like.clone();
        m.fill(0.0);
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let gs: Vec<&[f64]> = grads.tensors().into_iter().map(|t| t.2).collect();
        for (((p, m), v), g) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(gs)
        {
            for e in 0..p.len() {
                m[e] = b1 * m[e] + (1.0 - b1) * g[e];
                v[e] = b2 * v[e] + (1.0 - b2) * g[e] * g[e];
                p[e] -= lr * (m[e] / c1) / ((v[e] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training objective (MAE on normalized values).
    pub train_loss: f64,
    /// Training-mode predictions, de-normalized.
    pub train: MetricReport,
    pub val: Option<MetricReport>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
}

fn check_dataset(model: &Seq2SeqModel, data: &ForecastDataset) -> Result<(), ForecastError> {
    let c = model.config();
    if c.nodes != data.nodes() || c.history_len != data.history_len() || c.horizon != data.horizon() {
        return Err(ForecastError::Shape(format!(
            "model expects {} nodes, history {}, horizon {}; dataset has {}, {}, {}",
            c.nodes,
            c.history_len,
            c.horizon,
            data.nodes(),
            data.history_len(),
            data.horizon()
        )));
    }
    Ok(())
}

struct ChunkResult {
    grads: ModelParams,
    loss: f64,
    preds: Vec<(usize, DenseMatrix)>,
}

fn run_chunk(
    model: &Seq2SeqModel,
    data: &ForecastDataset,
    items: &[(usize, u64)],
    cfg: &TrainConfig,
    counter: u64,
) -> Result<ChunkResult, ForecastError> {
    let mut grads = model.params().clone();
    grads.fill(0.0);
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(items.len());
    for &(t, seed) in items {
        let (history, targets) = data.window(t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mode = TrainMode {
            dropout: cfg.dropout,
            batch_counter: counter,
            sampling_tau: cfg.sampling_tau,
            rng: &mut rng,
        };
        let (l, p) = model.sample_gradient(&history, &targets, &mut mode, &mut grads)?;
        loss += l;
        preds.push((t, p));
    }
    Ok(ChunkResult { grads, loss, preds })
}

/// Trains in place with Adam and returns one log entry per epoch.
/// Results are bit-identical for a fixed seed and thread count.
pub fn train(model: &mut Seq2SeqModel, data: &ForecastDataset, cfg: &TrainConfig) -> Result<TrainReport, ForecastError> {
    cfg.validate()?;
    check_dataset(model, data)?;
    let samples = data.samples(Split::Train);
    if samples.is_empty() && cfg.epochs > 0 {
        return Err(ForecastError::Config("training split has no complete windows".into()));
    }
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| ForecastError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(model.params());
    let mut counter = 0u64;
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = cfg.lr_at(epoch);
        let mut order = samples.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut train_acc = MetricAccumulator::default();
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let items: Vec<(usize, u64)> = batch.iter().map(|&t| (t, rng.gen())).collect();
            let diverged = |e: ForecastError| match e {
                ForecastError::NonFinite(_) => ForecastError::Diverged { epoch, batch: b },
                e => e,
            };
            let chunks: Vec<ChunkResult> = match &pool {
                None => vec![run_chunk(model, data, &items, cfg, counter).map_err(diverged)?],
                Some(pool) => {
                    let size = items.len().div_ceil(cfg.threads);
                    let m: &Seq2SeqModel = model;
                    pool.install(|| {
                        items
                            .par_chunks(size)
                            .map(|c| run_chunk(m, data, c, cfg, counter))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .map_err(diverged)?
                }
            };
            let mut grads = model.params().clone();
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            let scale = 1.0 / items.len() as f64;
            for c in &chunks {
                grads.add_scaled(&c.grads, scale);
                batch_loss += c.loss;
                for (t, p) in &c.preds {
                    let (_, targets) = data.window(*t);
                    train_acc.add(&data.denormalize(p), &data.denormalize(&targets))?;
                }
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(ForecastError::Diverged { epoch, batch: b });
            }
            loss_sum += batch_loss * items.len() as f64;
            adam.step(model.params_mut(), &grads, lr);
            if !model.params().is_finite() {
                return Err(ForecastError::Diverged { epoch, batch: b });
            }
            counter += 1;
        }
        let val = if data.samples(Split::Val).is_empty() {
            None
        } else {
            Some(evaluate(model, data, Split::Val)?.overall)
        };
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / samples.len() as f64,
            train: train_acc.finish(data.horizon())?,
            val,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: lr {lr:e}, loss {:.6}, train mae {:.4}, val mae {}, {:.2}s",
            log.train_loss,
            log.train.mae,
            log.val.as_ref().map_or("-".into(), |v| format!("{:.4}", v.mae)),
            log.seconds
        );
        report.epochs.push(log);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub overall: MetricReport,
    /// One report per forecast step.
    pub per_step: Vec<MetricReport>,
}

/// Evaluation-mode predictions for every window of a split, de-normalized,
/// paired with their targets.
pub fn predict_split(
    model: &Seq2SeqModel,
    data: &ForecastDataset,
    split: Split,
) -> Result<Vec<(DenseMatrix, DenseMatrix)>, ForecastError> {
    check_dataset(model, data)?;
    data.samples(split)
        .into_par_iter()
        .map(|t| {
            let (history, targets) = data.window(t);
            let p = model.forward(&history, data.horizon())?;
            Ok((data.denormalize(&p), data.denormalize(&targets)))
        })
        .collect()
}

pub fn evaluate(model: &Seq2SeqModel, data: &ForecastDataset, split: Split) -> Result<Evaluation, ForecastError> {
    let pairs = predict_split(model, data, split)?;
    if pairs.is_empty() {
        return Err(ForecastError::Config(format!("{} split has no complete windows", split.name())));
    }
    let horizon = data.horizon();
    let mut overall = MetricAccumulator::default();
    let mut steps = vec![MetricAccumulator::default(); horizon];
    for (p, y) in &pairs {
        overall.add(p, y)?;
        for (s, acc) in steps.iter_mut().enumerate() {
            let row = |m: &DenseMatrix| DenseMatrix::from_fn(1, m.cols(), |_, j| m.get(s, j));
            acc.add(&row(p), &row(y))?;
        }
    }
    Ok(Evaluation {
        overall: overall.finish(horizon)?,
        per_step: steps
            .into_iter()
            .enumerate()
            .map(|(s, a)| a.finish(s + 1))
            .collect::<Result<_, _>>()?,
    })
}

/// CSV with columns epoch, split, mae, rmse, mape, seconds.
pub fn write_metrics_csv<W: Write>(out: W, logs: &[EpochLog]) -> Result<(), ForecastError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| ForecastError::Io(e.to_string());
    w.write_record(["epoch", "split", "mae", "rmse", "mape", "seconds"]).map_err(csv_err)?;
    for log in logs {
        let mut rows = vec![("train", &log.train)];
        if let Some(v) = &log.val {
            rows.push(("val", v));
        }
        for (split, m) in rows {
            w.write_record([
                log.epoch.to_string(),
                split.to_string(),
                m.mae.to_string(),
                m.rmse.to_string(),
                m.mape.to_string(),
                format!("{:.6}", log.seconds),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| ForecastError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::conv::BasisOperator;
    use crate::forecast::model::ModelConfig;
    use crate::forecast::synthetic::{synthetic_diffusion, SyntheticConfig};
    use crate::mmf::{factorize, FactorizeConfig};
    use crate::wavelet::extract_basis;
    use std::sync::Arc;

    fn setup(n: usize, steps: usize, hidden: usize, seed: u64) -> (Seq2SeqModel, ForecastDataset) {
        let syn = synthetic_diffusion(&SyntheticConfig {
            nodes: n,
            steps,
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let f = factorize(&syn.laplacian, &FactorizeConfig::new(n / 2, 2)).unwrap();
        let w = extract_basis(&f, 0.0).unwrap();
        let data = syn.dataset(6, 2).unwrap();
        let cfg = ModelConfig {
            nodes: n,
            hidden,
            layers: 2,
            history_len: 6,
            horizon: 2,
        };
        (Seq2SeqModel::new(Arc::new(BasisOperator::sparse(&w)), cfg, seed).unwrap(), data)
    }

    #[test]
    fn defaults_and_schedule() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.dropout, c.batch, c.layers, c.hidden, c.diffusion_steps_k), (1e-2, 0.1, 64, 2, 64, 2));
        assert_eq!(c.lr_at(0), 1e-2);
        assert_eq!(c.lr_at(19), 1e-2);
        assert!((c.lr_at(20) - 1e-3).abs() <= 1e-18);
        assert!((c.lr_at(40) - 1e-4).abs() <= 1e-18);
        assert!(c.validate().is_ok());
        for bad in [
            TrainConfig { lr: 0.0, ..c.clone() },
            TrainConfig { dropout: 1.0, ..c.clone() },
            TrainConfig { batch: 0, ..c.clone() },
            TrainConfig { sampling_tau: -1.0, ..c.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let (mut model, data) = setup(8, 60, 3, 1);
        let before = model.params().clone();
        let report = train(&mut model, &data, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(model.params(), &before);
    }

    fn quick(epochs: usize, threads: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch: 8,
            hidden: 4,
            threads,
            sampling_tau: 20.0,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let (model, data) = setup(8, 120, 4, 2);
        let mut a = model.clone();
        let ra = train(&mut a, &data, &quick(20, 1)).unwrap();
        assert!(ra.epochs[19].train_loss < ra.epochs[0].train_loss);
        let mut b = model.clone();
        let rb = train(&mut b, &data, &quick(3, 1)).unwrap();
        for (x, y) in ra.epochs.iter().zip(&rb.epochs) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        }
        let mut c = model.clone();
        let rc = train(&mut c, &data, &quick(3, 1)).unwrap();
        assert_eq!(b.params(), c.params());
        assert_eq!(rb.epochs.len(), rc.epochs.len());
    }

    #[test]
    fn threaded_training_is_reproducible() {
        let (model, data) = setup(8, 60, 3, 3);
        let run = || {
            let mut m = model.clone();
            train(&mut m, &data, &quick(2, 3)).unwrap();
            m.params().clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_reported() {
        let (mut model, data) = setup(8, 60, 3, 4);
        let cfg = TrainConfig { lr: 1e308, ..quick(3, 1) };
        let err = train(&mut model, &data, &cfg).unwrap_err();
        assert!(matches!(err, ForecastError::Diverged { .. }), "{err}");
    }

    #[test]
    fn metrics_csv_layout() {
        let (mut model, data) = setup(8, 60, 3, 5);
        let report = train(&mut model, &data, &quick(2, 1)).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &report.epochs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,split,mae,rmse,mape,seconds");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].starts_with("0,train,"));
        assert!(lines[2].starts_with("0,val,"));
    }

    #[test]
    fn evaluation_reports_every_step() {
        let (model, data) = setup(8, 60, 3, 6);
        let e = evaluate(&model, &data, Split::Test).unwrap();
        assert_eq!(e.per_step.len(), 2);
        assert!(e.overall.rmse >= e.overall.mae);
        let mean_step = (e.per_step[0].mae + e.per_step[1].mae) / 2.0;
        assert!((mean_step - e.overall.mae).abs() <= 1e-9);
    }
}
