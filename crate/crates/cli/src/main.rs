use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use crftree::data::{synth_split, Dataset, ModelFile, Predictions, SynthTask};
use crftree::error::Error;
use crftree::graph::{class_frequency_weights, LossWeights};
use crftree::inference::predict;
use crftree::learner::{train_crftree_with, TrainConfig};
use crftree::metrics::evaluate;

#[derive(Debug, Parser)]
#[command(name = "crftree", version, about = "Decision-tree CRF potentials learned by column generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a labeled dataset.
    Train(TrainArgs),
    /// Predict MAP labelings for every instance of a dataset.
    Predict(PredictArgs),
    /// Compare predictions against a labeled dataset.
    Eval(EvalArgs),
    /// Generate synthetic train/test grid datasets.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossWeighting {
    /// Every class costs 1.
    Uniform,
    /// Costs inversely proportional to class frequency in the training set.
    InverseFrequency,
    /// Costs from the dataset header.
    Dataset,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
    /// Regularization trade-off.
    #[arg(long = "C", default_value_t = TrainConfig::default().c)]
    c: f64,
    #[arg(long, default_value_t = TrainConfig::default().cg_iters)]
    cg_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().tree_depth)]
    tree_depth: usize,
    #[arg(long, default_value_t = TrainConfig::default().eps_cp)]
    eps_cp: f64,
    #[arg(long, default_value_t = TrainConfig::default().max_cp_iters)]
    max_cp_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the dataset header's costs if present, else uniform.
    #[arg(long, value_enum)]
    loss_weights: Option<LossWeighting>,
    /// Stop once no new tree can improve the objective.
    #[arg(long)]
    early_stop: bool,
}

#[derive(Debug, clap::Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth_data: PathBuf,
    /// Comma-separated subset of acc, iou, fscore.
    #[arg(long, default_value = "acc,iou,fscore")]
    metrics: String,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, value_parser = ["linear", "xor"])]
    task: String,
    #[arg(long, default_value_t = 8)]
    grid: usize,
    #[arg(long, default_value_t = 30)]
    n_train: usize,
    #[arg(long, default_value_t = 30)]
    n_test: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
enum Failure {
    /// Bad flags, unreadable or malformed files, inconsistent inputs.
    Usage(String),
    /// Errors raised while computing.
    Internal(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Internal(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Format { .. } | Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    Ok(Dataset::load(path)?)
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let data = load_dataset(&args.data)?;
    if !data.is_labeled() {
        return Err(usage(format!("{}: every instance needs labels for training", args.data.display())));
    }
    let loss = match args.loss_weights {
        Some(LossWeighting::Uniform) => LossWeights::uniform(data.num_classes),
        Some(LossWeighting::InverseFrequency) => class_frequency_weights(&data.instances, data.num_classes)?,
        Some(LossWeighting::Dataset) => data
            .loss_weights
            .clone()
            .ok_or_else(|| usage(format!("{}: header has no loss_weights", args.data.display())))?,
        None => data
            .loss_weights
            .clone()
            .unwrap_or_else(|| LossWeights::uniform(data.num_classes)),
    };
    let cfg = TrainConfig {
        c: args.c,
        cg_iters: args.cg_iters,
        tree_depth: args.tree_depth,
        eps_cp: args.eps_cp,
        max_cp_iters: args.max_cp_iters,
        seed: args.seed,
        early_stop: args.early_stop,
    };
    cfg.validate()?;
    println!("round\tcp_iters\tobjective\txi\tmax_tree_objective\ttrain_risk");
    let outcome = train_crftree_with(&data.instances, &loss, &cfg, |r| {
        println!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.round, r.cp_iters, r.objective, r.xi, r.max_tree_objective, r.train_risk
        );
    })?;
    ModelFile {
        model: outcome.model,
        config: Some(cfg),
    }
    .save(&args.out_model)?;
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let data = load_dataset(&args.data)?;
    let model = ModelFile::load(&args.model)?.model;
    if model.num_classes() != data.num_classes {
        return Err(usage(format!(
            "model has {} classes but {} declares {}",
            model.num_classes(),
            args.data.display(),
            data.num_classes
        )));
    }
    let (node_dim, edge_dim) = model.required_dims();
    if node_dim > data.node_dim || edge_dim > data.edge_dim {
        return Err(usage(format!(
            "model needs node/edge feature dimensions {node_dim}/{edge_dim}, {} has {}/{}",
            args.data.display(),
            data.node_dim,
            data.edge_dim
        )));
    }
    let labelings = data
        .instances
        .iter()
        .map(|inst| predict(inst, &model))
        .collect::<Result<Vec<_>, _>>()?;
    Predictions {
        num_classes: model.num_classes(),
        labelings,
    }
    .save(&args.out)?;
    Ok(())
}

const METRICS: [&str; 3] = ["acc", "iou", "fscore"];

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let wanted: Vec<&str> = args.metrics.split(',').map(str::trim).filter(|m| !m.is_empty()).collect();
    if wanted.is_empty() {
        return Err(usage(format!("no metrics requested (valid: {})", METRICS.join(", "))));
    }
    if let Some(bad) = wanted.iter().find(|m| !METRICS.contains(m)) {
        return Err(usage(format!("unknown metric `{bad}` (valid: {})", METRICS.join(", "))));
    }
    let preds = Predictions::load(&args.pred)?;
    let data = load_dataset(&args.truth_data)?;
    if preds.labelings.len() != data.len() {
        return Err(usage(format!(
            "{} has {} labelings but {} has {} instances",
            args.pred.display(),
            preds.labelings.len(),
            args.truth_data.display(),
            data.len()
        )));
    }
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (i, (inst, y)) in data.instances.iter().zip(&preds.labelings).enumerate() {
        let t = inst
            .truth()
            .ok_or_else(|| usage(format!("{}: instance {i} has no labels", args.truth_data.display())))?;
        if t.len() != y.len() {
            return Err(usage(format!(
                "instance {i}: {} predicted labels for {} nodes",
                y.len(),
                t.len()
            )));
        }
        truth.extend_from_slice(t.as_slice());
        pred.extend_from_slice(y.as_slice());
    }
    let k = data.num_classes.max(preds.num_classes);
    let ev = evaluate(&truth, &pred, k)?;
    println!("metric\tclass\tvalue\tdefined");
    for metric in METRICS.iter().filter(|m| wanted.contains(m)) {
        match *metric {
            "acc" => println!("acc\tall\t{:.6}\ttrue", ev.accuracy),
            "iou" => {
                for row in &ev.per_class {
                    println!("iou\t{}\t{:.6}\t{}", row.class + 1, row.iou.value, row.iou.defined);
                }
                println!("iou\tmean\t{:.6}\ttrue", ev.mean_iou);
            }
            _ => {
                for row in &ev.per_class {
                    println!("fscore\t{}\t{:.6}\t{}", row.class + 1, row.f_score.value, row.f_score.defined);
                }
                println!("fscore\tmean\t{:.6}\ttrue", ev.mean_f_score);
            }
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let task: SynthTask = args.task.parse()?;
    let (train, test) = synth_split(
        args.seed,
        args.grid,
        args.classes,
        args.noise,
        task,
        args.n_train,
        args.n_test,
    )?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| usage(format!("{}: {e}", args.out_dir.display())))?;
    train.save(args.out_dir.join("train.json"))?;
    test.save(args.out_dir.join("test.json"))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
