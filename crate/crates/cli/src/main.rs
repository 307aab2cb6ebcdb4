//! `mmfw` command-line tool: factorize, extract wavelets, build adjacency,
//! train, evaluate and benchmark.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cli: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Run(String),
}

macro_rules! run_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Run(e.to_string())
            }
        })*
    };
}

run_errors!(
    mmfw::sparse::SparseError,
    mmfw::mmf::MmfError,
    mmfw::wavelet::WaveletError,
    mmfw::adjacency::AdjacencyError,
    mmfw::forecast::ForecastError,
    mmfw::eval::EvalError
);

#[derive(Parser, Debug)]
#[command(name = "mmfw", version, about = "Sparse graph wavelets from multiresolution matrix factorization, and wavelet-convolutional forecasting")]
pub struct Cli {
    /// Plain-text key=value settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default 1).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Factorize a symmetric matrix into rotations and a core-diagonal residual.
    Factorize(FactorizeArgs),
    /// Extract the wavelet basis from a factorization.
    Wavelets(WaveletArgs),
    /// Build a graph adjacency from distances or from time series.
    Adjacency(AdjacencyArgs),
    /// Train the wavelet-convolutional forecaster.
    Train(TrainArgs),
    /// Evaluate a checkpoint against the historical-average baseline.
    Eval(EvalArgs),
    /// Time training through the sparse basis against its densified copy.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct FactorizeArgs {
    /// Symmetric matrix in the sparse text format.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Rotation order k (default 2).
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Args, Debug)]
pub struct WaveletArgs {
    #[arg(long)]
    pub factorization: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Entries with magnitude at or below this are dropped (default 0).
    #[arg(long)]
    pub drop_tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AdjacencyMethod {
    /// Thresholded Gaussian kernel of a distance table.
    Gaussian,
    /// Sparse affine reconstruction weights learned from time series.
    Lle,
}

#[derive(Args, Debug)]
pub struct AdjacencyArgs {
    /// Distance table (sparse text format) for `gaussian`, series CSV for `lle`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = AdjacencyMethod::Gaussian)]
    pub method: AdjacencyMethod,
    /// Distance cutoff for the Gaussian kernel (default 0.01).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// ℓ₁ weight for `lle` (default 1e-5).
    #[arg(long)]
    pub lambda_a: Option<f64>,
    /// Write the Laplacian of the symmetrized adjacency instead.
    #[arg(long)]
    pub laplacian: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Series CSV: a header of node ids, one row per timestep.
    #[arg(long)]
    pub input: PathBuf,
    /// Wavelet basis file.
    #[arg(long)]
    pub wavelets: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Scheduled-sampling decay constant.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Multiply by the densified basis instead of the sparse one.
    #[arg(long)]
    pub dense: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub wavelets: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Season length of the historical-average baseline (default 12).
    #[arg(long)]
    pub period: Option<usize>,
    /// Report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Length of the synthetic series.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MMFW_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
