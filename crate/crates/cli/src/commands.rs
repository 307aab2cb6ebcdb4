use crate::config::ConfigFile;
use crate::output::{read, require_file, require_out_dir, write_atomic};
use crate::{
    AdjacencyArgs, AdjacencyMethod, BenchArgs, Cli, CliError, Command, EvalArgs, FactorizeArgs, SplitArg, TrainArgs,
    WaveletArgs,
};
use log::info;
use mmfw::adjacency::{
    gaussian_adjacency, laplacian, lle_adjacency, parse_series, symmetrize, DistanceTable, LleConfig, Split,
    DEFAULT_LAMBDA_A, DEFAULT_THRESHOLD,
};
use mmfw::eval::{bench_sparsity_and_speed, bench_table, historical_average, write_bench_csv, BenchConfig, MetricAccumulator, MetricReport};
use mmfw::forecast::{
    checkpoint_config, checkpoint_to_string, evaluate, parse_checkpoint, train, write_metrics_csv, BasisOperator,
    ModelConfig, Seq2SeqModel, TrainConfig,
};
use mmfw::mmf::io::{factorization_to_string, parse_factorization};
use mmfw::mmf::{factorize, FactorizeConfig};
use mmfw::sparse::io::{parse_sparse, sparse_to_string};
use mmfw::sparse::{coo_from_dense, DenseMatrix, SymmetricMatrix};
use mmfw::wavelet::io::{basis_to_string, parse_basis};
use mmfw::wavelet::{extract_basis, sparsity_report, WaveletBasis};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

const SPLIT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];
const DEFAULT_ORDER: usize = 2;
const DEFAULT_HISTORY: usize = 12;
const DEFAULT_HORIZON: usize = 12;
const DEFAULT_PERIOD: usize = 12;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let threads: usize = config.pick(cli.threads, "threads", 1)?;
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Run(format!("cli: thread pool: {e}")))?;
    match cli.command {
        Command::Factorize(a) => run_factorize(a, &config),
        Command::Wavelets(a) => run_wavelets(a, &config),
        Command::Adjacency(a) => run_adjacency(a, &config),
        Command::Train(a) => run_train(a, &config, threads),
        Command::Eval(a) => run_eval(a, &config),
        Command::Bench(a) => run_bench(a, &config),
    }
}

fn load_symmetric(path: &Path) -> Result<SymmetricMatrix, CliError> {
    let coo = parse_sparse(&read(path)?)?;
    let mut dense = DenseMatrix::zeros(coo.rows(), coo.cols());
    for &(i, j, v) in coo.entries() {
        dense.set(i, j, dense.get(i, j) + v);
    }
    Ok(SymmetricMatrix::new(dense)?)
}

fn run_factorize(a: FactorizeArgs, config: &ConfigFile) -> Result<(), CliError> {
    let levels: usize = config.require(a.levels, "levels")?;
    let order: usize = config.pick(a.order, "order", DEFAULT_ORDER)?;
    require_file(&a.input)?;
    require_out_dir(&a.out)?;
    let m = load_symmetric(&a.input)?;
    info!("factorizing {}x{} matrix, {levels} levels of order {order}", m.dim(), m.dim());
    let f = factorize(&m, &FactorizeConfig::new(levels, order))?;
    write_atomic(&a.out, factorization_to_string(&f).as_bytes())?;
    println!("residual {:e}", f.residual);
    Ok(())
}

fn run_wavelets(a: WaveletArgs, config: &ConfigFile) -> Result<(), CliError> {
    let drop_tol: f64 = config.pick(a.drop_tol, "drop-tol", 0.0)?;
    require_file(&a.factorization)?;
    require_out_dir(&a.out)?;
    let f = parse_factorization(&read(&a.factorization)?)?;
    let w = extract_basis(&f, drop_tol)?;
    write_atomic(&a.out, basis_to_string(&w).as_bytes())?;
    let r = sparsity_report(&w, f.order_k);
    println!("n {}", r.n);
    println!("nnz {} (bound {})", r.nnz, r.bound);
    println!("density {:.4}%", r.density_percent);
    println!("father nnz {}", r.father_nnz);
    let levels: Vec<String> = r.per_level_nnz.iter().map(usize::to_string).collect();
    println!("mother nnz by level {}", levels.join(" "));
    Ok(())
}

fn run_adjacency(a: AdjacencyArgs, config: &ConfigFile) -> Result<(), CliError> {
    let threshold: f64 = config.pick(a.threshold, "threshold", DEFAULT_THRESHOLD)?;
    let lambda_a: f64 = config.pick(a.lambda_a, "lambda-a", DEFAULT_LAMBDA_A)?;
    require_file(&a.input)?;
    require_out_dir(&a.out)?;
    let text = read(&a.input)?;
    let adj = match a.method {
        AdjacencyMethod::Gaussian => gaussian_adjacency(&DistanceTable::parse(&text)?, threshold)?,
        AdjacencyMethod::Lle => {
            let data = parse_series(&text, 1, 1, SPLIT_RATIOS)?;
            let span = data.split(Split::Train);
            let series = data.series();
            let x = DenseMatrix::from_fn(span.len(), series.cols(), |t, j| series.get(span.start + t, j));
            let cfg = LleConfig {
                lambda_a,
                ..LleConfig::default()
            };
            let result = lle_adjacency(&x, &cfg)?;
            if let (Some(first), Some(last)) = (result.objective.first(), result.objective.last()) {
                info!("lle objective {first:e} -> {last:e} in {} iterations", result.objective.len() - 1);
            }
            result.adjacency
        }
    };
    let matrix = if a.laplacian {
        laplacian(&symmetrize(&adj)).as_dense().clone()
    } else {
        adj.values().clone()
    };
    let coo = coo_from_dense(&matrix, 0.0);
    write_atomic(&a.out, sparse_to_string(&coo).as_bytes())?;
    println!("nodes {} nnz {}", matrix.rows(), coo.nnz());
    Ok(())
}

fn load_basis(path: &Path) -> Result<WaveletBasis, CliError> {
    Ok(parse_basis(&read(path)?)?)
}

fn run_train(a: TrainArgs, config: &ConfigFile, threads: usize) -> Result<(), CliError> {
    let d = TrainConfig::default();
    let history: usize = config.pick(a.history, "history", DEFAULT_HISTORY)?;
    let horizon: usize = config.pick(a.horizon, "horizon", DEFAULT_HORIZON)?;
    let cfg = TrainConfig {
        lr: config.pick(a.lr, "lr", d.lr)?,
        lr_decay: config.pick(None, "lr-decay", d.lr_decay)?,
        lr_decay_every: config.pick(None, "lr-decay-every", d.lr_decay_every)?,
        dropout: config.pick(a.dropout, "dropout", d.dropout)?,
        batch: config.pick(a.batch, "batch", d.batch)?,
        layers: config.pick(a.layers, "layers", d.layers)?,
        hidden: config.pick(a.hidden, "hidden", d.hidden)?,
        sampling_tau: config.pick(a.tau, "tau", d.sampling_tau)?,
        epochs: config.pick(a.epochs, "epochs", d.epochs)?,
        seed: config.pick(a.seed, "seed", d.seed)?,
        threads,
        ..d
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    require_file(&a.input)?;
    require_file(&a.wavelets)?;
    require_out_dir(&a.out)?;
    if let Some(m) = &a.metrics {
        require_out_dir(m)?;
    }
    let data = parse_series(&read(&a.input)?, history, horizon, SPLIT_RATIOS)?;
    let w = load_basis(&a.wavelets)?;
    let op = if a.dense {
        BasisOperator::dense(&w)
    } else {
        BasisOperator::sparse(&w)
    };
    let model_cfg = ModelConfig {
        nodes: data.nodes(),
        hidden: cfg.hidden,
        layers: cfg.layers,
        history_len: history,
        horizon,
    };
    let mut model = Seq2SeqModel::new(Arc::new(op), model_cfg, cfg.seed)?;
    let report = train(&mut model, &data, &cfg)?;
    for log in &report.epochs {
        info!(
            "epoch {} lr {:e} loss {:.6} train mae {:.6} val mae {}",
            log.epoch,
            log.lr,
            log.train_loss,
            log.train.mae,
            log.val.as_ref().map_or("-".to_string(), |v| format!("{:.6}", v.mae))
        );
    }
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &report.epochs)?;
    write_atomic(&a.out, checkpoint_to_string(&model).as_bytes())?;
    if let Some(m) = &a.metrics {
        write_atomic(m, &csv)?;
    }
    if let Some(last) = report.epochs.last() {
        print!("epochs {} train mae {:.6}", report.epochs.len(), last.train.mae);
        match &last.val {
            Some(v) => println!(" val mae {:.6}", v.mae),
            None => println!(),
        }
    }
    Ok(())
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    }
}

fn run_eval(a: EvalArgs, config: &ConfigFile) -> Result<(), CliError> {
    let period: usize = config.pick(a.period, "period", DEFAULT_PERIOD)?;
    require_file(&a.input)?;
    require_file(&a.wavelets)?;
    require_file(&a.checkpoint)?;
    if let Some(out) = &a.out {
        require_out_dir(out)?;
    }
    let ckpt = read(&a.checkpoint)?;
    let mc = checkpoint_config(&ckpt)?;
    let data = parse_series(&read(&a.input)?, mc.history_len, mc.horizon, SPLIT_RATIOS)?;
    let op = BasisOperator::sparse(&load_basis(&a.wavelets)?);
    let model = parse_checkpoint(&ckpt, Arc::new(op))?;
    let split = split_of(a.split);
    let ours = evaluate(&model, &data, split)?;

    let pairs = historical_average(&data, period, split)?;
    let mut ha = Vec::with_capacity(mc.horizon);
    let mut ha_all = MetricAccumulator::default();
    for step in 0..mc.horizon {
        let mut acc = MetricAccumulator::default();
        for (pred, truth) in &pairs {
            let row = |m: &DenseMatrix| DenseMatrix::from_fn(1, m.cols(), |_, j| m.get(step, j));
            acc.add(&row(pred), &row(truth))?;
        }
        ha.push(acc.finish(step + 1)?);
    }
    for (pred, truth) in &pairs {
        ha_all.add(pred, truth)?;
    }
    let ha_overall = ha_all.finish(mc.horizon)?;

    let mut table = String::new();
    let mut csv = String::from("model,split,step,mae,rmse,mape\n");
    let _ = writeln!(table, "{:<8} {:>5} {:>12} {:>12} {:>10}", "model", "step", "mae", "rmse", "mape%");
    let mut emit = |name: &str, step: &str, r: &MetricReport| {
        let _ = writeln!(
            table,
            "{name:<8} {step:>5} {:>12.6} {:>12.6} {:>10.4}",
            r.mae, r.rmse, r.mape
        );
        let _ = writeln!(csv, "{name},{},{step},{:e},{:e},{:e}", split.name(), r.mae, r.rmse, r.mape);
    };
    for (i, r) in ours.per_step.iter().enumerate() {
        emit("wavelet", &(i + 1).to_string(), r);
    }
    emit("wavelet", "all", &ours.overall);
    for (i, r) in ha.iter().enumerate() {
        emit("ha", &(i + 1).to_string(), r);
    }
    emit("ha", "all", &ha_overall);
    if let Some(out) = &a.out {
        write_atomic(out, csv.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn run_bench(a: BenchArgs, config: &ConfigFile) -> Result<(), CliError> {
    let d = BenchConfig::default();
    let nodes: usize = config.pick(a.nodes, "nodes", d.nodes)?;
    let cfg = BenchConfig {
        nodes,
        neighbors: config.pick(a.neighbors, "neighbors", d.neighbors)?,
        levels: config.pick(a.levels, "levels", (nodes / 2).max(1))?,
        order_k: config.pick(a.order, "order", d.order_k)?,
        runs: config.pick(a.runs, "runs", d.runs)?,
        hidden: config.pick(a.hidden, "hidden", d.hidden)?,
        history: config.pick(a.history, "history", d.history)?,
        horizon: config.pick(a.horizon, "horizon", d.horizon)?,
        steps: config.pick(a.steps, "steps", d.steps)?,
        seed: config.pick(a.seed, "seed", d.seed)?,
        ..d
    };
    if let Some(out) = &a.out {
        require_out_dir(out)?;
    }
    let (sparse, dense) = bench_sparsity_and_speed(&cfg)?;
    let results = [sparse, dense];
    if let Some(out) = &a.out {
        let mut csv = Vec::new();
        write_bench_csv(&mut csv, &results)?;
        write_atomic(out, &csv)?;
    }
    print!("{}", bench_table(&results));
    Ok(())
}
