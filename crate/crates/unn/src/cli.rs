//! The `unn` command line: data generation, training, filtering, prediction,
//! evaluation, cross-validation, and a scripted two-class reproduction run.
//!
//! Every flag can also be set in a TOML config file (`--config`), one table
//! per subcommand with keys named like the long flags; command-line values
//! override file values. Exit codes: 0 success, 1 usage error, 2 data or
//! domain error, 3 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::boost::{train, Oracle, Smoothing, TrainConfig};
use crate::classify::{filter_model, filter_model_per_class, predict_dataset, FilterSpec};
use crate::dataset::{
    gen_blobs, gen_ripley, load_csv, save_csv, Dataset, RIPLEY_CENTERS, RIPLEY_VARIANCE,
};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, evaluate, render_report, CvMode, EvalMode};
use crate::losses::LossKind;
use crate::model::{load_model, save_model};
use crate::neighbors::{build_graph, load_graph_cache, save_graph_cache, Backend, MetricSpec};

#[derive(Parser, Debug)]
#[command(
    name = "unn",
    version,
    about = "Leveraged k-NN classification trained by boosting",
    propagate_version = true
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Cap worker parallelism (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Train a leveraged model on a CSV dataset.
    Train(TrainArgs),
    /// Shrink a trained model to its most useful prototypes.
    Filter(FilterArgs),
    /// Batch-predict labels for a query CSV.
    Predict(PredictArgs),
    /// Evaluate a model on a labeled CSV.
    Eval(EvalArgs),
    /// k-fold cross-validation on a CSV dataset.
    Cv(CvArgs),
    /// Scripted experiment pipelines.
    #[command(subcommand)]
    Repro(ReproCmd),
}

#[derive(Subcommand, Debug)]
enum GenCmd {
    /// Two-class Gaussian-mixture benchmark (train and test files).
    Ripley(GenRipleyArgs),
    /// Isotropic Gaussian clusters on scaled basis centers.
    Blobs(GenBlobsArgs),
}

#[derive(Args, Debug)]
struct GenRipleyArgs {
    /// Training points [default: 250].
    #[arg(long)]
    train: Option<usize>,
    /// Test points [default: 1000].
    #[arg(long)]
    test: Option<usize>,
    /// RNG seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// File-name prefix [default: ripley].
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Args, Debug)]
struct GenBlobsArgs {
    /// Number of classes [default: 8].
    #[arg(long)]
    classes: Option<usize>,
    /// Points per class [default: 100].
    #[arg(long)]
    per_class: Option<usize>,
    /// Feature dimension [default: 16].
    #[arg(long)]
    dim: Option<usize>,
    /// Per-coordinate standard deviation [default: 0.35].
    #[arg(long)]
    spread: Option<f64>,
    /// RNG seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// File-name prefix [default: blobs].
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training CSV (header row; one label column).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Label column name [default: label].
    #[arg(long)]
    label_column: Option<String>,
    /// Neighbor count [default: 9].
    #[arg(long)]
    k: Option<usize>,
    /// Surrogate loss: exp | squared | logistic [default: exp].
    #[arg(long)]
    loss: Option<String>,
    /// Weak index chooser: lazy-random | lazy-ordered | boosting |
    /// boosting-once [default: boosting].
    #[arg(long)]
    oracle: Option<String>,
    /// Iterations per class [default: 2m].
    #[arg(long)]
    iters: Option<usize>,
    /// Smoothing policy: on-zero | always [default: on-zero].
    #[arg(long)]
    smoothing: Option<String>,
    /// Solve each leveraging step by root finding instead of closed form.
    #[arg(long)]
    exact_delta: bool,
    /// Greedy-oracle stopping threshold on |delta| [default: 1e-8].
    #[arg(long)]
    convergence_tol: Option<f64>,
    /// RNG seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Search backend: exhaustive | kdtree [default: kdtree].
    #[arg(long)]
    backend: Option<String>,
    /// Min-max scale every feature to [0, 1] before training.
    #[arg(long)]
    normalize: bool,
    /// Neighbor-graph cache file: loaded and validated when present,
    /// written after building otherwise.
    #[arg(long, value_name = "FILE")]
    graph_cache: Option<PathBuf>,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Output diagnostics CSV [default: <model>.diagnostics.csv].
    #[arg(long, value_name = "FILE")]
    diagnostics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Input model file.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Keep the fraction theta of prototypes with largest coefficient norm.
    #[arg(long)]
    theta: Option<f64>,
    /// Keep prototypes with some coefficient above this threshold.
    #[arg(long)]
    alpha_tilde: Option<f64>,
    /// In fraction mode, also drop rows with no positive coefficient.
    #[arg(long)]
    exclude_nonpositive: bool,
    /// Keep a separate pool per class instead of one shared pool.
    #[arg(long)]
    per_class: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model file.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Query CSV; a label column (if present) is ignored.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Label column name to ignore [default: label].
    #[arg(long)]
    label_column: Option<String>,
    /// Override the model's neighbor count.
    #[arg(long)]
    k: Option<usize>,
    /// Output prediction CSV.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also dump per-neighbor contributions to this CSV.
    #[arg(long, value_name = "FILE")]
    contributions: Option<PathBuf>,
    /// Class name whose contributions to dump [default: each query's
    /// predicted class].
    #[arg(long)]
    contribution_class: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model file.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Labeled CSV to evaluate on.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Label column name [default: label].
    #[arg(long)]
    label_column: Option<String>,
    /// Voting rule: classic | leveraged [default: leveraged].
    #[arg(long)]
    mode: Option<String>,
    /// Override the model's neighbor count.
    #[arg(long)]
    k: Option<usize>,
    /// Write the JSON report here (stdout summary is always printed).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    /// Labeled CSV dataset.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Label column name [default: label].
    #[arg(long)]
    label_column: Option<String>,
    /// Number of folds [default: 3].
    #[arg(long)]
    folds: Option<usize>,
    /// Neighbor count [default: 11].
    #[arg(long)]
    k: Option<usize>,
    /// Surrogate loss [default: exp].
    #[arg(long)]
    loss: Option<String>,
    /// Weak index chooser [default: boosting].
    #[arg(long)]
    oracle: Option<String>,
    /// Iterations per class [default: 2m of each training fold].
    #[arg(long)]
    iters: Option<usize>,
    /// classic | leveraged [default: leveraged].
    #[arg(long)]
    mode: Option<String>,
    /// Fraction filter after training (leveraged mode).
    #[arg(long)]
    theta: Option<f64>,
    /// Threshold filter after training (leveraged mode).
    #[arg(long)]
    alpha_tilde: Option<f64>,
    /// Per-class filtering pools.
    #[arg(long)]
    per_class: bool,
    /// Random prototype sampling proportion for classic mode [default: 1].
    #[arg(long)]
    sample_theta: Option<f64>,
    /// RNG seed for folds and training [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Search backend [default: kdtree].
    #[arg(long)]
    backend: Option<String>,
    /// Min-max scale features before splitting.
    #[arg(long)]
    normalize: bool,
    /// Write the JSON report here.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ReproCmd {
    /// Full two-class pipeline: generate, compare oracles, sweep k and the
    /// retained fraction, and emit plot-ready CSV traces.
    Ripley(ReproRipleyArgs),
}

#[derive(Args, Debug)]
struct ReproRipleyArgs {
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// RNG seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Training points [default: 250].
    #[arg(long)]
    train: Option<usize>,
    /// Test points [default: 1000].
    #[arg(long)]
    test: Option<usize>,
}

// ---------------------------------------------------------------------------
// Config-file layering
// ---------------------------------------------------------------------------

/// Values from the optional TOML file; one table per subcommand.
struct FileCfg {
    table: toml::Table,
    section: &'static str,
}

impl FileCfg {
    fn load(path: Option<&Path>, section: &'static str) -> Result<FileCfg> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::domain(format!("bad config file {}: {e}", p.display())))?
            }
        };
        Ok(FileCfg { table, section })
    }

    fn value(&self, key: &str) -> Option<&toml::Value> {
        self.table.get(self.section)?.as_table()?.get(key)
    }

    fn usize_(&self, key: &str) -> Result<Option<usize>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_integer()
                .filter(|&i| i >= 0)
                .map(|i| Some(i as usize))
                .ok_or_else(|| bad_key(self.section, key, "a non-negative integer")),
        }
    }

    fn u64_(&self, key: &str) -> Result<Option<u64>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_integer()
                .filter(|&i| i >= 0)
                .map(|i| Some(i as u64))
                .ok_or_else(|| bad_key(self.section, key, "a non-negative integer")),
        }
    }

    fn f64_(&self, key: &str) -> Result<Option<f64>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .map(Some)
                .ok_or_else(|| bad_key(self.section, key, "a number")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| bad_key(self.section, key, "a string")),
        }
    }

    fn bool_(&self, key: &str) -> Result<Option<bool>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| bad_key(self.section, key, "a boolean")),
        }
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }
}

fn bad_key(section: &str, key: &str, expected: &str) -> Error {
    Error::domain(format!("config [{section}].{key} must be {expected}"))
}

fn required<T>(cli: Option<T>, file: Option<T>, flag: &str) -> Result<T> {
    cli.or(file)
        .ok_or_else(|| Error::Usage(format!("missing required --{flag}")))
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // Build-global fails if a pool already exists (e.g. repeated calls
        // in one process); parallel results are order-independent anyway.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `run` over the process arguments.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Gen(GenCmd::Ripley(a)) => cmd_gen_ripley(a, config),
        Command::Gen(GenCmd::Blobs(a)) => cmd_gen_blobs(a, config),
        Command::Train(a) => cmd_train(a, config),
        Command::Filter(a) => cmd_filter(a, config),
        Command::Predict(a) => cmd_predict(a, config),
        Command::Eval(a) => cmd_eval(a, config),
        Command::Cv(a) => cmd_cv(a, config),
        Command::Repro(ReproCmd::Ripley(a)) => cmd_repro_ripley(a, config),
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn cmd_gen_ripley(args: &GenRipleyArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "gen-ripley")?;
    let m_train = args.train.or(cfg.usize_("train")?).unwrap_or(250);
    let m_test = args.test.or(cfg.usize_("test")?).unwrap_or(1000);
    let seed = args.seed.or(cfg.u64_("seed")?).unwrap_or(1);
    let out_dir = args
        .out_dir
        .clone()
        .or(cfg.path("out-dir")?)
        .unwrap_or_else(|| PathBuf::from("."));
    let prefix = args
        .prefix
        .clone()
        .or(cfg.string("prefix")?)
        .unwrap_or_else(|| "ripley".to_string());

    let (train_ds, test_ds) = gen_ripley(m_train, m_test, seed)?;
    std::fs::create_dir_all(&out_dir)?;
    let train_path = out_dir.join(format!("{prefix}-train.csv"));
    let test_path = out_dir.join(format!("{prefix}-test.csv"));
    save_csv(&train_ds, &train_path)?;
    save_csv(&test_ds, &test_path)?;
    let meta = serde_json::json!({
        "schema_version": 1,
        "generator": "ripley",
        "m_train": m_train,
        "m_test": m_test,
        "seed": seed,
        "component_means": RIPLEY_CENTERS,
        "component_variance": RIPLEY_VARIANCE,
        "class_names": ["N", "P"],
    });
    let meta_path = out_dir.join(format!("{prefix}-meta.json"));
    std::fs::write(&meta_path, format!("{}\n", serde_json::to_string_pretty(&meta).unwrap()))?;
    println!(
        "wrote {} ({} rows), {} ({} rows), {}",
        train_path.display(),
        m_train,
        test_path.display(),
        m_test,
        meta_path.display()
    );
    Ok(())
}

fn cmd_gen_blobs(args: &GenBlobsArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "gen-blobs")?;
    let classes = args.classes.or(cfg.usize_("classes")?).unwrap_or(8);
    let per_class = args.per_class.or(cfg.usize_("per-class")?).unwrap_or(100);
    let dim = args.dim.or(cfg.usize_("dim")?).unwrap_or(16);
    let spread = args.spread.or(cfg.f64_("spread")?).unwrap_or(0.35);
    let seed = args.seed.or(cfg.u64_("seed")?).unwrap_or(1);
    let out_dir = args
        .out_dir
        .clone()
        .or(cfg.path("out-dir")?)
        .unwrap_or_else(|| PathBuf::from("."));
    let prefix = args
        .prefix
        .clone()
        .or(cfg.string("prefix")?)
        .unwrap_or_else(|| "blobs".to_string());

    let ds = gen_blobs(classes, per_class, dim, spread, seed)?;
    std::fs::create_dir_all(&out_dir)?;
    let data_path = out_dir.join(format!("{prefix}.csv"));
    save_csv(&ds, &data_path)?;
    let meta = serde_json::json!({
        "schema_version": 1,
        "generator": "blobs",
        "classes": classes,
        "per_class": per_class,
        "dim": dim,
        "spread": spread,
        "seed": seed,
    });
    let meta_path = out_dir.join(format!("{prefix}-meta.json"));
    std::fs::write(&meta_path, format!("{}\n", serde_json::to_string_pretty(&meta).unwrap()))?;
    println!("wrote {} ({} rows), {}", data_path.display(), ds.len(), meta_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
    k: usize,
    loss: LossKind,
    oracle: Oracle,
    iters: Option<usize>,
    smoothing: Smoothing,
    exact_delta: bool,
    convergence_tol: f64,
    seed: u64,
    backend: Backend,
}

impl TrainFlags {
    fn config(&self, m: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.loss, self.k, self.iters.unwrap_or(2 * m), self.seed);
        cfg.oracle = self.oracle;
        cfg.smoothing = self.smoothing;
        cfg.exact_delta = self.exact_delta;
        cfg.convergence_tol = self.convergence_tol;
        cfg
    }
}

fn train_flags(
    cfg: &FileCfg,
    k_cli: Option<usize>,
    loss_cli: &Option<String>,
    oracle_cli: &Option<String>,
    iters_cli: Option<usize>,
    smoothing_cli: &Option<String>,
    exact_delta_cli: bool,
    tol_cli: Option<f64>,
    seed_cli: Option<u64>,
    backend_cli: &Option<String>,
    default_k: usize,
) -> Result<TrainFlags> {
    let loss = loss_cli
        .clone()
        .or(cfg.string("loss")?)
        .map(|s| LossKind::parse(&s))
        .transpose()?
        .unwrap_or(LossKind::Exponential);
    let oracle = oracle_cli
        .clone()
        .or(cfg.string("oracle")?)
        .map(|s| Oracle::parse(&s))
        .transpose()?
        .unwrap_or(Oracle::Boosting);
    let smoothing = smoothing_cli
        .clone()
        .or(cfg.string("smoothing")?)
        .map(|s| Smoothing::parse(&s))
        .transpose()?
        .unwrap_or(Smoothing::OnZero);
    let backend = backend_cli
        .clone()
        .or(cfg.string("backend")?)
        .map(|s| Backend::parse(&s))
        .transpose()?
        .unwrap_or(Backend::KdTree);
    Ok(TrainFlags {
        k: k_cli.or(cfg.usize_("k")?).unwrap_or(default_k),
        loss,
        oracle,
        iters: iters_cli.or(cfg.usize_("iters")?),
        smoothing,
        exact_delta: exact_delta_cli || cfg.bool_("exact-delta")?.unwrap_or(false),
        convergence_tol: tol_cli
            .or(cfg.f64_("convergence-tol")?)
            .unwrap_or(crate::boost::DEFAULT_CONVERGENCE_TOL),
        seed: seed_cli.or(cfg.u64_("seed")?).unwrap_or(0),
        backend,
    })
}

fn load_training_data(
    data: &Path,
    label_column: &str,
    normalize: bool,
) -> Result<Dataset> {
    let ds = load_csv(data, label_column)?;
    Ok(if normalize { ds.normalize_minmax() } else { ds })
}

fn cmd_train(args: &TrainArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "train")?;
    let data = required(args.data.clone(), cfg.path("data")?, "data")?;
    let model_path = required(args.model.clone(), cfg.path("model")?, "model")?;
    let label_column = args
        .label_column
        .clone()
        .or(cfg.string("label-column")?)
        .unwrap_or_else(|| "label".to_string());
    let normalize = args.normalize || cfg.bool_("normalize")?.unwrap_or(false);
    let flags = train_flags(
        &cfg,
        args.k,
        &args.loss,
        &args.oracle,
        args.iters,
        &args.smoothing,
        args.exact_delta,
        args.convergence_tol,
        args.seed,
        &args.backend,
        9,
    )?;
    let diagnostics_path = args
        .diagnostics
        .clone()
        .or(cfg.path("diagnostics")?)
        .unwrap_or_else(|| {
            let mut p = model_path.as_os_str().to_owned();
            p.push(".diagnostics.csv");
            PathBuf::from(p)
        });
    let graph_cache = args.graph_cache.clone().or(cfg.path("graph-cache")?);

    let ds = load_training_data(&data, &label_column, normalize)?;
    let train_cfg = flags.config(ds.len());
    let graph = match &graph_cache {
        Some(path) if path.exists() => {
            load_graph_cache(path, &ds, train_cfg.k, MetricSpec::Euclidean)?
        }
        _ => {
            let g = build_graph(&ds, train_cfg.k, MetricSpec::Euclidean, flags.backend)?;
            if let Some(path) = &graph_cache {
                save_graph_cache(&g, &ds, MetricSpec::Euclidean, path)?;
            }
            g
        }
    };
    let (model, diagnostics) = train(&ds, &graph, &train_cfg)?;
    save_model(&model, &model_path)?;
    std::fs::write(&diagnostics_path, diagnostics.to_csv())?;

    println!(
        "trained on {} examples, {} classes (loss {}, oracle {}, k {})",
        ds.len(),
        ds.class_count(),
        train_cfg.loss,
        train_cfg.oracle.name(),
        graph.k()
    );
    for trace in &diagnostics.per_class {
        let last = trace.iters.last();
        println!(
            "  class {}: {} iterations, surrogate {:.6} -> {:.6}{}",
            trace.class,
            trace.iters.len(),
            trace.initial_surrogate,
            last.map_or(trace.initial_surrogate, |r| r.surrogate),
            if trace.stopped_early { " (converged)" } else { "" }
        );
    }
    println!("model: {}", model_path.display());
    println!("diagnostics: {}", diagnostics_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

fn filter_spec_from(
    theta: Option<f64>,
    alpha_tilde: Option<f64>,
    exclude_nonpositive: bool,
) -> Result<FilterSpec> {
    match (theta, alpha_tilde) {
        (Some(theta), None) => Ok(FilterSpec::Fraction {
            theta,
            exclude_nonpositive,
        }),
        (None, Some(alpha_tilde)) => Ok(FilterSpec::Threshold { alpha_tilde }),
        (None, None) => Err(Error::Usage(
            "exactly one of --theta or --alpha-tilde is required".to_string(),
        )),
        (Some(_), Some(_)) => Err(Error::Usage(
            "--theta and --alpha-tilde are mutually exclusive".to_string(),
        )),
    }
}

fn cmd_filter(args: &FilterArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "filter")?;
    let model_path = required(args.model.clone(), cfg.path("model")?, "model")?;
    let out_path = required(args.out.clone(), cfg.path("out")?, "out")?;
    let spec = filter_spec_from(
        args.theta.or(cfg.f64_("theta")?),
        args.alpha_tilde.or(cfg.f64_("alpha-tilde")?),
        args.exclude_nonpositive || cfg.bool_("exclude-nonpositive")?.unwrap_or(false),
    )?;
    let per_class = args.per_class || cfg.bool_("per-class")?.unwrap_or(false);

    let model = load_model(&model_path)?;
    let before = model.prototypes().len();
    let filtered = if per_class {
        filter_model_per_class(&model, &spec)?
    } else {
        filter_model(&model, &spec)?
    };
    save_model(&filtered, &out_path)?;
    println!(
        "retained {} of {} prototypes ({:.1}%) -> {}",
        filtered.prototypes().len(),
        before,
        100.0 * filtered.prototypes().len() as f64 / before as f64,
        out_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

/// Load a query CSV: the label column, when present, is dropped.
fn load_queries(path: &Path, label_column: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::domain(format!("csv error: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::domain(format!("csv error: {e}")))?
        .clone();
    let label_idx = headers.iter().position(|h| h == label_column);
    let mut rows = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::domain(format!("csv error: {e}")))?;
        let mut feats = Vec::with_capacity(headers.len());
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_idx {
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: rec_no + 2,
                column: headers.get(col).unwrap_or("?").to_string(),
                message: format!("'{cell}' is not a number"),
            })?;
            feats.push(v);
        }
        if feats.len() != dim {
            return Err(Error::domain(format!(
                "query row {} has {} features, model expects {dim}",
                rec_no + 2,
                feats.len()
            )));
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::domain("query file has no rows"));
    }
    Ok(rows)
}

fn cmd_predict(args: &PredictArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "predict")?;
    let model_path = required(args.model.clone(), cfg.path("model")?, "model")?;
    let data = required(args.data.clone(), cfg.path("data")?, "data")?;
    let out = required(args.out.clone(), cfg.path("out")?, "out")?;
    let label_column = args
        .label_column
        .clone()
        .or(cfg.string("label-column")?)
        .unwrap_or_else(|| "label".to_string());
    let k = args.k.or(cfg.usize_("k")?);
    let contributions_path = args.contributions.clone().or(cfg.path("contributions")?);
    let contribution_class = args
        .contribution_class
        .clone()
        .or(cfg.string("contribution-class")?);

    let model = load_model(&model_path)?;
    let queries = load_queries(&data, &label_column, model.prototypes().dim())?;
    let class_names = model.prototypes().class_names().to_vec();
    let contribution_class_idx = contribution_class
        .map(|name| {
            class_names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::domain(format!("unknown class '{name}'")))
        })
        .transpose()?;

    let mut out_csv = String::from("id,predicted");
    for name in &class_names {
        let _ = write!(out_csv, ",score_{name}");
    }
    out_csv.push('\n');
    let mut contrib_csv = String::from("query_id,neighbor_id,neighbor_class,contribution\n");
    let want_contributions = contributions_path.is_some();
    for (q, feats) in queries.iter().enumerate() {
        let p = crate::classify::score_leveraged_with(
            feats,
            &model,
            k.unwrap_or_else(|| model.k()),
            want_contributions,
            contribution_class_idx,
        )?;
        let _ = write!(out_csv, "{q},{}", class_names[p.label]);
        for s in &p.scores {
            let _ = write!(out_csv, ",{s}");
        }
        out_csv.push('\n');
        if let Some(contributions) = &p.contributions {
            for c in contributions {
                let _ = writeln!(
                    contrib_csv,
                    "{q},{},{},{}",
                    c.prototype_id, class_names[c.prototype_class], c.value
                );
            }
        }
    }
    std::fs::write(&out, out_csv)?;
    println!("wrote {} predictions -> {}", queries.len(), out.display());
    if let Some(path) = contributions_path {
        std::fs::write(&path, contrib_csv)?;
        println!("contributions -> {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(args: &EvalArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "eval")?;
    let model_path = required(args.model.clone(), cfg.path("model")?, "model")?;
    let data = required(args.data.clone(), cfg.path("data")?, "data")?;
    let label_column = args
        .label_column
        .clone()
        .or(cfg.string("label-column")?)
        .unwrap_or_else(|| "label".to_string());
    let mode = args
        .mode
        .clone()
        .or(cfg.string("mode")?)
        .map(|s| EvalMode::parse(&s))
        .transpose()?
        .unwrap_or(EvalMode::Leveraged);
    let k = args.k.or(cfg.usize_("k")?);
    let report_path = args.report.clone().or(cfg.path("report")?);

    let model = load_model(&model_path)?;
    let test_set = load_csv(&data, &label_column)?;
    if test_set.class_names() != model.prototypes().class_names() {
        return Err(Error::domain(format!(
            "class alphabet mismatch: model has {:?}, data has {:?}",
            model.prototypes().class_names(),
            test_set.class_names()
        )));
    }
    let report = evaluate(&model, &test_set, mode, k, Backend::Exhaustive)?;
    print!("{}", render_report(&report, test_set.class_names()));
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(&path, format!("{json}\n"))?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cv
// ---------------------------------------------------------------------------

fn cmd_cv(args: &CvArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "cv")?;
    let data = required(args.data.clone(), cfg.path("data")?, "data")?;
    let label_column = args
        .label_column
        .clone()
        .or(cfg.string("label-column")?)
        .unwrap_or_else(|| "label".to_string());
    let folds = args.folds.or(cfg.usize_("folds")?).unwrap_or(3);
    let normalize = args.normalize || cfg.bool_("normalize")?.unwrap_or(false);
    let flags = train_flags(
        &cfg,
        args.k,
        &args.loss,
        &args.oracle,
        args.iters,
        &None,
        false,
        None,
        args.seed,
        &args.backend,
        11,
    )?;
    let mode_name = args
        .mode
        .clone()
        .or(cfg.string("mode")?)
        .unwrap_or_else(|| "leveraged".to_string());
    let report_path = args.report.clone().or(cfg.path("report")?);

    let ds = load_training_data(&data, &label_column, normalize)?;
    let cell_size = ds.len() / folds;
    let train_cfg = flags.config(cell_size.max(1));
    let mode = match EvalMode::parse(&mode_name)? {
        EvalMode::Leveraged => {
            let filter = match (
                args.theta.or(cfg.f64_("theta")?),
                args.alpha_tilde.or(cfg.f64_("alpha-tilde")?),
            ) {
                (None, None) => None,
                (theta, alpha_tilde) => Some(filter_spec_from(
                    theta,
                    alpha_tilde,
                    cfg.bool_("exclude-nonpositive")?.unwrap_or(false),
                )?),
            };
            CvMode::Leveraged {
                filter,
                per_class_filter: args.per_class || cfg.bool_("per-class")?.unwrap_or(false),
            }
        }
        EvalMode::Classic => CvMode::Classic {
            sample_theta: args
                .sample_theta
                .or(cfg.f64_("sample-theta")?)
                .unwrap_or(1.0),
        },
    };
    let report = cross_validate(&ds, folds, &train_cfg, &mode, flags.seed, flags.backend)?;
    println!(
        "{}-fold cross-validation ({}, k={}):",
        folds,
        mode_name,
        train_cfg.k
    );
    for fold in &report.folds {
        println!(
            "  fold {}: train {} / test {}, retained {} ({:.1}%), mAP {:.4}, error {:.4}",
            fold.fold,
            fold.train_size,
            fold.test_size,
            fold.retained,
            100.0 * fold.retained_fraction,
            fold.report.map,
            fold.report.error_rate
        );
    }
    println!(
        "mean mAP {:.4}, mean error {:.4}, mean retained fraction {:.3}",
        report.mean_map, report.mean_error, report.mean_retained_fraction
    );
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(&path, format!("{json}\n"))?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// repro ripley
// ---------------------------------------------------------------------------

fn cmd_repro_ripley(args: &ReproRipleyArgs, config: Option<&Path>) -> Result<()> {
    let cfg = FileCfg::load(config, "repro-ripley")?;
    let out_dir = args
        .out_dir
        .clone()
        .or(cfg.path("out-dir")?)
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = args.seed.or(cfg.u64_("seed")?).unwrap_or(1);
    let m_train = args.train.or(cfg.usize_("train")?).unwrap_or(250);
    let m_test = args.test.or(cfg.usize_("test")?).unwrap_or(1000);
    std::fs::create_dir_all(&out_dir)?;

    let (train_ds, test_ds) = gen_ripley(m_train, m_test, seed)?;
    save_csv(&train_ds, out_dir.join("ripley-train.csv"))?;
    save_csv(&test_ds, out_dir.join("ripley-test.csv"))?;

    // Oracle comparison at k = 9: surrogate decay per iteration.
    let mut oracle_csv = String::from("oracle,class,t,surrogate\n");
    {
        let graph = build_graph(&train_ds, 9, MetricSpec::Euclidean, Backend::KdTree)?;
        for oracle in [Oracle::Boosting, Oracle::LazyRandom, Oracle::LazyOrdered] {
            let mut tc = TrainConfig::new(LossKind::Exponential, 9, train_ds.len(), seed);
            tc.oracle = oracle;
            let (_, diag) = train(&train_ds, &graph, &tc)?;
            for trace in &diag.per_class {
                for rec in &trace.iters {
                    let _ = writeln!(
                        oracle_csv,
                        "{},{},{},{}",
                        oracle.name(),
                        trace.class,
                        rec.t,
                        rec.surrogate
                    );
                }
            }
        }
    }
    let oracle_path = out_dir.join("ripley-oracle-trace.csv");
    std::fs::write(&oracle_path, oracle_csv)?;

    // Error sweep: k in {1, 3, ..., 15}, retained fraction in
    // {0.25, 0.5, 0.75, 1.0}, plus the plain k-NN baseline.
    let mut unn_csv = String::from("k,theta,retained,test_error,mAP\n");
    let mut classic_csv = String::from("k,test_error,mAP\n");
    for k in (1..=15).step_by(2) {
        let graph = build_graph(&train_ds, k, MetricSpec::Euclidean, Backend::KdTree)?;
        let tc = TrainConfig::new(LossKind::Exponential, k, 2 * train_ds.len(), seed);
        let (model, _) = train(&train_ds, &graph, &tc)?;
        for theta in [0.25, 0.5, 0.75, 1.0] {
            let filtered = filter_model(
                &model,
                &FilterSpec::Fraction {
                    theta,
                    exclude_nonpositive: false,
                },
            )?;
            let report = evaluate(
                &filtered,
                &test_ds,
                EvalMode::Leveraged,
                None,
                Backend::Exhaustive,
            )?;
            let _ = writeln!(
                unn_csv,
                "{k},{theta},{},{},{}",
                filtered.prototypes().len(),
                report.error_rate,
                report.map
            );
        }
        let classic = evaluate(
            &model,
            &test_ds,
            EvalMode::Classic,
            Some(k),
            Backend::Exhaustive,
        )?;
        let _ = writeln!(classic_csv, "{k},{},{}", classic.error_rate, classic.map);
    }
    let unn_path = out_dir.join("ripley-error-vs-k.csv");
    let classic_path = out_dir.join("ripley-classic-error-vs-k.csv");
    std::fs::write(&unn_path, unn_csv)?;
    std::fs::write(&classic_path, classic_csv)?;
    println!(
        "wrote {}, {}, {}",
        oracle_path.display(),
        unn_path.display(),
        classic_path.display()
    );
    Ok(())
}
