//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Every run that
//! writes an output file also writes the resolved configuration next to it
//! (`<stem>.config.json`), or to `--config-echo` when given.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::bench::{render_svg, run_bench, to_csv, BenchConfig};
use crate::booster::{predict, predict_raw, train_observed, BoostParams, PhaseTimings};
use crate::data::{
    generate_synthetic, load_csv, load_features_csv, split_train_valid, write_csv, Dataset,
    TaskKind,
};
use crate::error::Error;
use crate::metrics::evaluate;
use crate::model_store::{load, save};
use crate::sketch::{bound_report, BoundReport, SketchStrategy};
use crate::tree::TreeParams;
use crate::verify::{verify_bounds, VerifyConfig};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "sketchtree",
    version,
    about = "Multioutput gradient boosting with sketched split search"
)]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Path for the resolved-configuration JSON (default: next to the main output).
    #[arg(long, global = true)]
    pub config_echo: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Train a model from a CSV file.
    Train(TrainArgs),
    /// Write task-space predictions for a CSV file.
    Predict(PredictArgs),
    /// Print metrics of a model on labelled data as JSON.
    Eval(EvalArgs),
    /// Time training against class count for several sketch strategies.
    Bench(BenchArgs),
    /// Check the deterministic sketch error bounds on random matrices.
    VerifyBounds(VerifyArgs),
    /// Write a synthetic multiclass dataset.
    Gen(GenArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BoostArgs {
    #[arg(long, value_enum, default_value_t = SketchStrategy::None)]
    pub sketch: SketchStrategy,
    /// Sketch width (ignored by `none`, capped at the number of outputs).
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub trees: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    #[arg(long, default_value_t = 0.0)]
    pub min_gain: f64,
    /// Patience in iterations; 0 disables early stopping.
    #[arg(long, default_value_t = 100)]
    pub early_stopping: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 255)]
    pub max_bins: usize,
}

impl BoostArgs {
    pub fn to_params(&self) -> BoostParams {
        BoostParams {
            n_trees: self.trees,
            learning_rate: self.lr,
            tree: TreeParams {
                max_depth: self.depth,
                lambda_l2: self.lambda,
                min_samples_leaf: self.min_samples_leaf,
                min_gain: self.min_gain,
            },
            sketch: self.sketch,
            k: self.k,
            early_stopping_rounds: self.early_stopping,
            seed: self.seed,
            max_bins: self.max_bins,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskKind,
    /// Target column(s); one integer label column or several one-hot/label/value columns.
    #[arg(long = "label", required = true, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// The CSV has no header row; columns are addressed by 0-based index.
    #[arg(long)]
    pub no_header: bool,
    /// Validation CSV with the same layout as `--data`.
    #[arg(long, conflicts_with = "valid_fraction")]
    pub valid: Option<PathBuf>,
    /// Hold out this fraction of `--data` for validation (seeded by `--seed`).
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    #[command(flatten)]
    pub boost: BoostArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSON (default `<stem>.metrics.json` next to `--out`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Write sketch bound diagnostics for sampled iterations to this JSON file.
    #[arg(long)]
    pub verify_bounds: Option<PathBuf>,
    /// Iteration stride for `--verify-bounds`.
    #[arg(long, default_value_t = 10)]
    pub verify_every: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub no_header: bool,
    /// Columns to ignore (e.g. targets present in the file).
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Write raw scores instead of probabilities.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "label", required = true, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 25, 50, 100])]
    pub classes: Vec<usize>,
    #[arg(long, default_value_t = 50_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 10)]
    pub informative: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    /// T; every configuration trains T and 2T trees.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SketchStrategy::None, SketchStrategy::RandomProjection])]
    pub strategies: Vec<SketchStrategy>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG line plot.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random leaves per sketch for the empirical score error.
    #[arg(long, default_value_t = 200)]
    pub leaves: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Full per-trial report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 10)]
    pub informative: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed run: bad arguments (exit 2) or a runtime error (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a worker pool of `cli.threads` threads.
pub fn execute(cli: &Cli) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Train(args) => cmd_train(cli, args),
        Command::Predict(args) => cmd_predict(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Bench(args) => cmd_bench(cli, args),
        Command::VerifyBounds(args) => cmd_verify_bounds(cli, args),
        Command::Gen(args) => cmd_gen(cli, args),
    })
}

/// `dir/stem.suffix` for an output path `dir/stem.ext`.
pub fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn echo_config(
    cli: &Cli,
    main_output: Option<&Path>,
    extra: Option<serde_json::Value>,
) -> CliResult {
    let path = match (&cli.config_echo, main_output) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => sidecar_path(out, "config.json"),
        (None, None) => return Ok(()),
    };
    let mut value = serde_json::to_value(cli).map_err(Error::from)?;
    if let Some(extra) = extra {
        value["resolved"] = extra;
    }
    write_json(&path, &value)
}

fn labels(args: &[String]) -> Vec<&str> {
    args.iter().map(String::as_str).collect()
}

/// Appends all-zero one-hot columns so a multiclass dataset has `d` outputs.
fn pad_classes(ds: Dataset, d: usize) -> CliResult<Dataset> {
    if ds.task() != TaskKind::Multiclass || ds.n_outputs() == d {
        return Ok(ds);
    }
    if ds.n_outputs() > d {
        return Err(Error::Shape(format!(
            "data has {} classes but the model has {d}",
            ds.n_outputs()
        ))
        .into());
    }
    let extra = Array2::zeros((ds.n_rows(), d - ds.n_outputs()));
    let targets = concatenate(Axis(1), &[ds.targets(), extra.view()]).expect("row counts agree");
    Ok(Dataset::new(ds.features().to_owned(), targets, ds.task())?)
}

#[derive(Serialize)]
struct TrainMetrics {
    n_trees: usize,
    best_iteration: Option<usize>,
    train_loss: Vec<f64>,
    valid_loss: Vec<f64>,
    /// Wall-clock seconds; the only nondeterministic section.
    timing_seconds: TimingSeconds,
}

#[derive(Serialize)]
struct TimingSeconds {
    binning: f64,
    gradients: f64,
    sketch: f64,
    histogram: f64,
    split: f64,
    partition: f64,
    leaf_fit: f64,
    update: f64,
    total: f64,
}

impl From<PhaseTimings> for TimingSeconds {
    fn from(t: PhaseTimings) -> Self {
        Self {
            binning: t.binning.as_secs_f64(),
            gradients: t.gradients.as_secs_f64(),
            sketch: t.sketch.as_secs_f64(),
            histogram: t.histogram.as_secs_f64(),
            split: t.split.as_secs_f64(),
            partition: t.partition.as_secs_f64(),
            leaf_fit: t.leaf_fit.as_secs_f64(),
            update: t.update.as_secs_f64(),
            total: t.total.as_secs_f64(),
        }
    }
}

#[derive(Serialize)]
struct IterationBounds {
    iteration: usize,
    report: BoundReport,
}

const TRAIN_BOUND_LEAVES: usize = 100;

fn cmd_train(cli: &Cli, args: &TrainArgs) -> CliResult {
    let params = args.boost.to_params();
    params.validate().map_err(usage)?;
    if let Some(f) = args.valid_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Usage(format!(
                "--valid-fraction must lie in (0, 1), got {f}"
            )));
        }
    }
    if args.verify_every == 0 {
        return Err(CliError::Usage("--verify-every must be >= 1".into()));
    }
    let data = load_csv(
        &args.data,
        &labels(&args.labels),
        args.task,
        !args.no_header,
    )?;
    let (train_ds, valid_ds) = match (&args.valid, args.valid_fraction) {
        (Some(path), _) => {
            let valid = load_csv(path, &labels(&args.labels), args.task, !args.no_header)?;
            let d = data.n_outputs().max(valid.n_outputs());
            (pad_classes(data, d)?, Some(pad_classes(valid, d)?))
        }
        (None, Some(f)) => {
            let (t, v) = split_train_valid(&data, f, params.seed)?;
            (t, Some(v))
        }
        (None, None) => (data, None),
    };

    let mut bounds = Vec::new();
    let lambda = params.tree.lambda_l2;
    let (model, timings) = train_observed(&train_ds, valid_ds.as_ref(), &params, |view| {
        if args.verify_bounds.is_some() && view.iteration % args.verify_every == 0 {
            if let Some(sketch) = view.sketch {
                let report = bound_report(
                    view.grad_hess.grad.view(),
                    sketch,
                    lambda,
                    TRAIN_BOUND_LEAVES,
                    sketch.seed,
                )?;
                bounds.push(IterationBounds {
                    iteration: view.iteration,
                    report,
                });
            }
        }
        Ok(())
    })?;

    save(&model, &args.out)?;
    let history = model.history();
    let metrics = TrainMetrics {
        n_trees: model.trees().len(),
        best_iteration: history.best_iteration,
        train_loss: history.train_loss.clone(),
        valid_loss: history.valid_loss.clone(),
        timing_seconds: timings.into(),
    };
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| sidecar_path(&args.out, "metrics.json"));
    write_json(&metrics_path, &metrics)?;
    if let Some(path) = &args.verify_bounds {
        write_json(
            path,
            &serde_json::json!({ "strategy": params.sketch, "iterations": bounds }),
        )?;
    }
    let resolved = serde_json::json!({
        "params": params,
        "effective_k": params.effective_k(train_ds.n_outputs()),
        "n_train": train_ds.n_rows(),
        "n_valid": valid_ds.as_ref().map(Dataset::n_rows),
        "n_features": train_ds.n_features(),
        "n_outputs": train_ds.n_outputs(),
    });
    echo_config(cli, Some(&args.out), Some(resolved))?;
    eprintln!(
        "trained {} trees (d = {}, m = {}) -> {}",
        model.trees().len(),
        model.n_outputs(),
        model.n_features(),
        args.out.display()
    );
    Ok(())
}

fn write_matrix_csv(path: &Path, header_prefix: &str, values: ArrayView2<'_, f64>) -> CliResult {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| CliError::from(Error::io(path, e));
    let header: Vec<String> = (0..values.ncols())
        .map(|j| format!("{header_prefix}{j}"))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for row in values.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> CliResult {
    let model = load(&args.model)?;
    let features = load_features_csv(&args.data, &labels(&args.drop), !args.no_header)?;
    let (values, prefix) = if args.raw {
        (predict_raw(&model, features.view())?, "raw")
    } else {
        let prefix = if model.task().is_classification() {
            "p"
        } else {
            "y"
        };
        (predict(&model, features.view())?, prefix)
    };
    write_matrix_csv(&args.out, prefix, values.view())?;
    echo_config(cli, Some(&args.out), None)
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> CliResult {
    let model = load(&args.model)?;
    let ds = load_csv(
        &args.data,
        &labels(&args.labels),
        model.task(),
        !args.no_header,
    )?;
    let ds = pad_classes(ds, model.n_outputs())?;
    let report = evaluate(&model, &ds)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(Error::from)?
    );
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    echo_config(cli, args.out.as_deref(), None)
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> CliResult {
    let config = BenchConfig {
        classes: args.classes.clone(),
        rows: args.rows,
        features: args.features,
        informative: args.informative,
        depth: args.depth,
        trees: args.trees,
        strategies: args.strategies.clone(),
        k: args.k,
        learning_rate: args.lr,
        lambda: args.lambda,
        seed: args.seed,
    };
    config.validate().map_err(usage)?;
    if args.informative == 0 || args.informative > args.features {
        return Err(CliError::Usage(
            "--informative must lie in [1, --features]".into(),
        ));
    }
    let rows = run_bench(&config, |r| {
        eprintln!(
            "{:>5} classes  {:<10} k={:<4} {:.3} s / 100 trees",
            r.classes, r.strategy, r.k, r.seconds
        )
    })?;
    let csv = to_csv(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.plot {
        std::fs::write(path, render_svg(&rows)).map_err(|e| Error::io(path, e))?;
    }
    echo_config(
        cli,
        args.out.as_deref().or(args.plot.as_deref()),
        Some(serde_json::to_value(&config).map_err(Error::from)?),
    )
}

fn cmd_verify_bounds(cli: &Cli, args: &VerifyArgs) -> CliResult {
    let config = VerifyConfig {
        n: args.n,
        d: args.d,
        k: args.k,
        trials: args.trials,
        seed: args.seed,
        leaves: args.leaves,
        lambda: args.lambda,
    };
    config.validate().map_err(usage)?;
    let outcome = verify_bounds(&config)?;
    if let Some(path) = &args.out {
        write_json(path, &outcome)?;
    }
    echo_config(cli, args.out.as_deref(), None)?;
    println!(
        "{} trials, {} checks, {} violations",
        outcome.trials.len(),
        outcome.checks,
        outcome.violations.len()
    );
    for v in &outcome.violations {
        println!(
            "trial {} {}: {} ({} vs {})",
            v.trial, v.strategy, v.check, v.lhs, v.rhs
        );
    }
    if outcome.passed() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("bound violations found".into()).into())
    }
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> CliResult {
    let ds = generate_synthetic(
        args.rows,
        args.features,
        args.informative,
        args.classes,
        args.seed,
    )
    .map_err(usage)?;
    write_csv(&ds, &args.out)?;
    echo_config(cli, Some(&args.out), None)
}
