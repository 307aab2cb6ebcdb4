use super::cell::{step_backward, step_cached, wcgru_step, CellCache, WcGruParams};
use super::conv::BasisOperator;
use super::ForecastError;
use crate::sparse::DenseMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub nodes: usize,
    pub hidden: usize,
    pub layers: usize,
    pub history_len: usize,
    pub horizon: usize,
}

/// Every trainable tensor of the encoder–decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub(crate) encoder: Vec<WcGruParams>,
    pub(crate) decoder: Vec<WcGruParams>,
    pub(crate) proj_weight: Vec<f64>,
    pub(crate) proj_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let stack = || {
            (0..cfg.layers)
                .map(|l| WcGruParams::zeros(cfg.nodes, if l == 0 { 1 } else { cfg.hidden }, cfg.hidden))
                .collect::<Vec<_>>()
        };
        Self {
            encoder: stack(),
            decoder: stack(),
            proj_weight: vec![0.0; cfg.hidden],
            proj_bias: vec![0.0],
        }
    }

    pub fn random(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut stack = || {
            (0..cfg.layers)
                .map(|l| WcGruParams::random(cfg.nodes, if l == 0 { 1 } else { cfg.hidden }, cfg.hidden, rng))
                .collect::<Vec<_>>()
        };
        let encoder = stack();
        let decoder = stack();
        let bound = 1.0 / (cfg.hidden as f64).sqrt();
        let proj_weight = (0..cfg.hidden).map(|_| rng.gen_range(-bound..bound)).collect();
        let proj_bias = vec![rng.gen_range(-bound..bound)];
        Self {
            encoder,
            decoder,
            proj_weight,
            proj_bias,
        }
    }

    pub fn encoder(&self) -> &[WcGruParams] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[WcGruParams] {
        &self.decoder
    }

    pub fn projection(&self) -> (&[f64], f64) {
        (&self.proj_weight, self.proj_bias[0])
    }

    /// Named tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (stack, cells) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, cell) in cells.iter().enumerate() {
                for (name, dims, values) in cell.tensors() {
                    out.push((format!("{stack}.{l}.{name}"), dims, values));
                }
            }
        }
        out.push(("projection.weight".into(), vec![self.proj_weight.len()], &self.proj_weight[..]));
        out.push(("projection.bias".into(), vec![1], &self.proj_bias[..]));
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for cell in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(cell.tensors_mut());
        }
        out.push(&mut self.proj_weight);
        out.push(&mut self.proj_bias);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub(crate) fn fill(&mut self, v: f64) {
        for t in self.tensors_mut() {
            t.fill(v);
        }
    }

    /// `self += s · other`, tensor by tensor.
    pub(crate) fn add_scaled(&mut self, other: &ModelParams, s: f64) {
        let src: Vec<&[f64]> = other.tensors().into_iter().map(|t| t.2).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(src).for_each(|(d, v)| *d += s * v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }
}

/// Stochastic parts of a training-mode pass.
pub struct TrainMode<'a> {
    pub dropout: f64,
    pub batch_counter: u64,
    pub sampling_tau: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Probability of feeding the ground truth at global batch `i`.
pub fn sampling_probability(i: u64, tau: f64) -> f64 {
    tau / (tau + (i as f64 / tau).exp())
}

pub fn scheduled_sample<R: Rng>(i: u64, tau: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < sampling_probability(i, tau)
}

fn dropout_mask(rate: f64, len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some((0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect())
}

fn apply_mask(h: &DenseMatrix, mask: &Option<Vec<f64>>) -> DenseMatrix {
    match mask {
        None => h.clone(),
        Some(m) => {
            let mut out = h.clone();
            out.as_mut_slice().iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            out
        }
    }
}

fn frame(m: &DenseMatrix, t: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m.cols(), 1, |i, _| m.get(t, i))
}

#[derive(Default)]
struct Tape {
    enc: Vec<Vec<(CellCache, Option<Vec<f64>>)>>,
    dec: Vec<Vec<(CellCache, Option<Vec<f64>>)>>,
    dec_top: Vec<DenseMatrix>,
    teacher: Vec<bool>,
}

/// Wavelet-convolutional GRU encoder–decoder.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    basis: Arc<BasisOperator>,
    config: ModelConfig,
    pub(crate) params: ModelParams,
}

impl Seq2SeqModel {
    pub fn new(basis: Arc<BasisOperator>, config: ModelConfig, seed: u64) -> Result<Self, ForecastError> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::random(&config, &mut rng);
        Self::from_params(basis, config, params)
    }

    pub fn from_params(basis: Arc<BasisOperator>, config: ModelConfig, params: ModelParams) -> Result<Self, ForecastError> {
        if config.layers == 0 || config.hidden == 0 || config.history_len == 0 {
            return Err(ForecastError::Config("layers, hidden size and history length must be positive".into()));
        }
        if basis.dim() != config.nodes {
            return Err(ForecastError::Shape(format!(
                "basis has dimension {} but the model expects {} nodes",
                basis.dim(),
                config.nodes
            )));
        }
        let want = ModelParams::zeros(&config);
        let shapes = |p: &ModelParams| p.tensors().into_iter().map(|(n, d, _)| (n, d)).collect::<Vec<_>>();
        if shapes(&want) != shapes(&params) {
            return Err(ForecastError::Shape("parameter shapes do not match the model configuration".into()));
        }
        if !params.is_finite() {
            return Err(ForecastError::NonFinite("model parameters".into()));
        }
        Ok(Self { basis, config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn basis(&self) -> &BasisOperator {
        &self.basis
    }

    fn check_history(&self, history: &DenseMatrix) -> Result<(), ForecastError> {
        if history.shape() != (self.config.history_len, self.config.nodes) {
            return Err(ForecastError::Shape(format!(
                "history {:?}, expected {}x{}",
                history.shape(),
                self.config.history_len,
                self.config.nodes
            )));
        }
        Ok(())
    }

    fn project(&self, top: &DenseMatrix) -> Vec<f64> {
        let b = self.params.proj_bias[0];
        (0..top.rows())
            .map(|m| top.row(m).iter().zip(&self.params.proj_weight).map(|(h, w)| h * w).sum::<f64>() + b)
            .collect()
    }

    /// Evaluation-mode prediction of `horizon` frames: no dropout, every
    /// decoder step fed the previous prediction.
    pub fn forward(&self, history: &DenseMatrix, horizon: usize) -> Result<DenseMatrix, ForecastError> {
        self.check_history(history)?;
        let (n, hd, layers) = (self.config.nodes, self.config.hidden, self.config.layers);
        let mut states = vec![DenseMatrix::zeros(n, hd); layers];
        let basis = &*self.basis;
        for t in 0..history.rows() {
            let mut input = frame(history, t);
            for (l, cell) in self.params.encoder.iter().enumerate() {
                states[l] = wcgru_step(cell, basis, &input, &states[l])?;
                input = states[l].clone();
            }
        }
        let mut preds = DenseMatrix::zeros(horizon, n);
        let mut input = frame(history, history.rows() - 1);
        for s in 0..horizon {
            for (l, cell) in self.params.decoder.iter().enumerate() {
                states[l] = wcgru_step(cell, basis, &input, &states[l])?;
                input = states[l].clone();
            }
            let p = self.project(&input);
            preds.row_mut(s).copy_from_slice(&p);
            input = DenseMatrix::from_vec(n, 1, p).map_err(|_| ForecastError::NonFinite("prediction".into()))?;
        }
        Ok(preds)
    }

    fn forward_tape(
        &self,
        history: &DenseMatrix,
        targets: &DenseMatrix,
        mode: &mut TrainMode<'_>,
    ) -> Result<(DenseMatrix, Tape), ForecastError> {
        let (n, hd, layers) = (self.config.nodes, self.config.hidden, self.config.layers);
        let basis = &*self.basis;
        let mut tape = Tape::default();
        let mut states = vec![DenseMatrix::zeros(n, hd); layers];
        for t in 0..history.rows() {
            let mut input = frame(history, t);
            let mut step = Vec::with_capacity(layers);
            for (l, cell) in self.params.encoder.iter().enumerate() {
                let (h, cache) = step_cached(cell, basis, &input, &states[l])?;
                let mask = if l + 1 < layers {
                    dropout_mask(mode.dropout, n * hd, mode.rng)
                } else {
                    None
                };
                input = apply_mask(&h, &mask);
                states[l] = h;
                step.push((cache, mask));
            }
            tape.enc.push(step);
        }
        let horizon = targets.rows();
        let mut preds = DenseMatrix::zeros(horizon, n);
        let mut input = frame(history, history.rows() - 1);
        for s in 0..horizon {
            let mut step = Vec::with_capacity(layers);
            for (l, cell) in self.params.decoder.iter().enumerate() {
                let (h, cache) = step_cached(cell, basis, &input, &states[l])?;
                let mask = dropout_mask(mode.dropout, n * hd, mode.rng);
                input = apply_mask(&h, &mask);
                states[l] = h;
                step.push((cache, mask));
            }
            tape.dec.push(step);
            let p = self.project(&input);
            tape.dec_top.push(input);
            preds.row_mut(s).copy_from_slice(&p);
            if !p.iter().all(|v| v.is_finite()) {
                return Err(ForecastError::NonFinite("prediction".into()));
            }
            let teacher = scheduled_sample(mode.batch_counter, mode.sampling_tau, mode.rng);
            tape.teacher.push(teacher);
            input = if teacher {
                frame(targets, s)
            } else {
                DenseMatrix::from_vec(n, 1, p).expect("finite prediction")
            };
        }
        Ok((preds, tape))
    }

    /// Training-mode pass on one window. Returns the mean absolute error and
    /// the predictions, and adds the gradient of that error into `grads`.
    pub fn sample_gradient(
        &self,
        history: &DenseMatrix,
        targets: &DenseMatrix,
        mode: &mut TrainMode<'_>,
        grads: &mut ModelParams,
    ) -> Result<(f64, DenseMatrix), ForecastError> {
        self.check_history(history)?;
        let (n, hd, layers) = (self.config.nodes, self.config.hidden, self.config.layers);
        if targets.cols() != n {
            return Err(ForecastError::Shape(format!("targets {:?} for {n} nodes", targets.shape())));
        }
        let (preds, tape) = self.forward_tape(history, targets, mode)?;
        let horizon = targets.rows();
        if horizon == 0 {
            return Ok((0.0, preds));
        }
        let count = (horizon * n) as f64;
        let loss = preds
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(p, y)| (p - y).abs())
            .sum::<f64>()
            / count;

        let basis = &*self.basis;
        let mut dstate = vec![DenseMatrix::zeros(n, hd); layers];
        let mut carry: Option<DenseMatrix> = None;
        for s in (0..horizon).rev() {
            let mut dpred: Vec<f64> = (0..n)
                .map(|m| {
                    let diff = preds.get(s, m) - targets.get(s, m);
                    if diff > 0.0 {
                        1.0 / count
                    } else if diff < 0.0 {
                        -1.0 / count
                    } else {
                        0.0
                    }
                })
                .collect();
            if let Some(c) = carry.take() {
                dpred.iter_mut().zip(c.as_slice()).for_each(|(d, v)| *d += v);
            }
            let top = &tape.dec_top[s];
            for (m, &dp) in dpred.iter().enumerate() {
                grads.proj_bias[0] += dp;
                grads.proj_weight.iter_mut().zip(top.row(m)).for_each(|(g, h)| *g += dp * h);
            }
            let mut dinput = DenseMatrix::from_fn(n, hd, |m, j| dpred[m] * self.params.proj_weight[j]);
            for l in (0..layers).rev() {
                let (cache, mask) = &tape.dec[s][l];
                let mut dh = apply_mask(&dinput, mask);
                dh.as_mut_slice()
                    .iter_mut()
                    .zip(dstate[l].as_slice())
                    .for_each(|(a, b)| *a += b);
                let (dx, dprev) = step_backward(&self.params.decoder[l], basis, cache, &dh, &mut grads.decoder[l])?;
                dstate[l] = dprev;
                dinput = dx;
            }
            if s > 0 && !tape.teacher[s - 1] {
                carry = Some(dinput);
            }
        }
        for t in (0..tape.enc.len()).rev() {
            let mut dinput: Option<DenseMatrix> = None;
            for l in (0..layers).rev() {
                let (cache, mask) = &tape.enc[t][l];
                let mut dh = dstate[l].clone();
                if let Some(di) = &dinput {
                    let masked = apply_mask(di, mask);
                    dh.as_mut_slice()
                        .iter_mut()
                        .zip(masked.as_slice())
                        .for_each(|(a, b)| *a += b);
                }
                let (dx, dprev) = step_backward(&self.params.encoder[l], basis, cache, &dh, &mut grads.encoder[l])?;
                dstate[l] = dprev;
                dinput = Some(dx);
            }
        }
        Ok((loss, preds))
    }
}
