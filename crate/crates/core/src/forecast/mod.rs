//! Wavelet-convolutional recurrent forecasting: spectral and diffusion
//! convolutions, the GRU cell built on them, a sequence-to-sequence model
//! with reverse-mode gradients, and Adam training.

mod cell;
mod checkpoint;
mod conv;
mod model;
mod synthetic;
mod train;

use crate::eval::EvalError;
use crate::sparse::SparseError;

pub use cell::{wcgru_step, WcGruParams};
pub use checkpoint::{checkpoint_config, checkpoint_to_string, parse_checkpoint, write_checkpoint};
pub use conv::{diffusion_conv, wavelet_conv, BasisOperator, DiffusionFilter, Nonlinearity, SpectralFilter};
pub use model::{sampling_probability, scheduled_sample, ModelConfig, ModelParams, Seq2SeqModel, TrainMode};
pub use synthetic::{synthetic_diffusion, SyntheticConfig, SyntheticDiffusion};
pub use train::{evaluate, predict_split, train, write_metrics_csv, Adam, EpochLog, Evaluation, TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("neural-forecast: shape mismatch: {0}")]
    Shape(String),
    #[error("neural-forecast: invalid configuration: {0}")]
    Config(String),
    #[error("neural-forecast: non-finite {0}")]
    NonFinite(String),
    #[error("neural-forecast: training diverged (non-finite loss) in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("neural-forecast: checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("neural-forecast: {0}")]
    Io(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
