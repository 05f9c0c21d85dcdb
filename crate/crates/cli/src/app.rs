//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use difnet::checks::{gradient_suite, GRAD_TOLERANCE};
use difnet::diffusion::{DiffusionRoute, DEFAULT_DENSE_MAX_NODES};
use difnet::gdu::GduVariant;
use difnet::model::ResidualKind;
use difnet::train::{
    depth_sweep, read_metrics, read_sweep, train, write_metrics, write_sweep, ModelKind, TrainConfig, TrainError,
};
use log::info;
use thiserror::Error;

use crate::datasets::{self, Dataset};
use crate::plot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Train(TrainError::Config(_)) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Train(TrainError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[derive(Debug, Parser)]
#[command(name = "difnet", version, about = "Train and evaluate gated diffusive graph networks and GCN baselines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write per-epoch metrics.
    Train(TrainArgs),
    /// Train one model per depth and write a comparison table.
    Sweep(SweepArgs),
    /// Run the finite-difference gradient suite on the bundled toy graph.
    Gradcheck,
    /// Render a metrics or sweep CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Auto,
    Dense,
    Sparse,
}

impl From<Route> for DiffusionRoute {
    fn from(r: Route) -> Self {
        match r {
            Route::Auto => DiffusionRoute::Auto { dense_max_nodes: DEFAULT_DENSE_MAX_NODES },
            Route::Dense => DiffusionRoute::Dense,
            Route::Sparse => DiffusionRoute::Sparse,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Dataset::Cora)]
    pub dataset: Dataset,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// full | simplified
    #[arg(long = "gdu", default_value_t = GduVariant::Full)]
    pub gdu_variant: GduVariant,
    /// naive | raw | graph-naive | graph-raw
    #[arg(long, default_value_t = ResidualKind::GraphRaw)]
    pub residual: ResidualKind,
    /// Defaults to 0.01, or 0.005 on pubmed.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attention evaluation: dense score matrix, edge list, or by graph size.
    #[arg(long, value_enum, default_value_t = Route::Auto)]
    pub route: Route,
    /// Shuffle node order with this seed before taking the split.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

impl ModelArgs {
    pub fn config(&self, model: ModelKind) -> TrainConfig {
        let base = TrainConfig::for_dataset(self.dataset.name());
        TrainConfig {
            model,
            depth: self.depth,
            hidden: self.hidden,
            gdu_variant: self.gdu_variant,
            residual: self.residual,
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            max_epochs: self.epochs,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            seed: self.seed,
            route: self.route.into(),
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// difnet | gcn
    #[arg(long, default_value_t = ModelKind::DifNet)]
    pub model: ModelKind,
    #[command(flatten)]
    pub common: ModelArgs,
    /// Metrics CSV destination.
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
    /// Also save the best-validation parameters here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated depths, e.g. 2,10,20.
    #[arg(long, value_delimiter = ',', required = true)]
    pub depths: Vec<usize>,
    /// Comma-separated models to sweep.
    #[arg(long, value_delimiter = ',', default_value = "difnet,gcn")]
    pub models: Vec<ModelKind>,
    /// Parallel training runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub common: ModelArgs,
    /// Sweep CSV destination.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metrics or sweep CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, writing the human-readable summary to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(args) => cmd_train(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::Gradcheck => cmd_gradcheck(out),
        Command::Plot(args) => cmd_plot(args, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn load(dataset: Dataset, shuffle: Option<u64>) -> Result<(difnet::graph::Graph, difnet::graph::Split), CliError> {
    let root = datasets::data_root();
    let (g, split) = datasets::load(dataset, &root, shuffle).map_err(TrainError::from)?;
    info!(
        "{dataset}: {} nodes, {} features, {} classes, split {}/{}/{}",
        g.node_count(),
        g.feature_dim(),
        g.class_count(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok((g, split))
}

fn report_io(e: std::io::Error) -> CliError {
    CliError::Train(TrainError::Io(e))
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.common.config(args.model);
    cfg.validate()?;
    let (g, split) = load(args.common.dataset, args.common.split_seed)?;
    let outcome = train(&cfg, &g, &split)?;
    let mut w = create(&args.out)?;
    write_metrics(&mut w, &outcome.report.records)?;
    w.flush().map_err(|e| io_err(&args.out, e))?;
    if let Some(path) = &args.checkpoint {
        outcome.checkpoint.save(path)?;
    }
    let r = &outcome.report;
    writeln!(
        out,
        "{} depth {} on {}: best val acc {:.4} at epoch {}, test acc {:.4}, {:.2} s",
        cfg.model,
        cfg.depth,
        cfg.dataset,
        r.best_val_acc,
        r.best_val_epoch,
        r.test_acc_at_best_val,
        r.wall_clock_seconds
    )
    .map_err(report_io)?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.models.is_empty() {
        return Err(CliError::Usage("--models must name at least one model".into()));
    }
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    for &model in &args.models {
        for &depth in &args.depths {
            TrainConfig { depth, ..args.common.config(model) }.validate()?;
        }
    }
    let (g, split) = load(args.common.dataset, args.common.split_seed)?;
    let mut rows = Vec::new();
    for &model in &args.models {
        rows.extend(depth_sweep(&args.common.config(model), &args.depths, &g, &split, args.jobs)?);
    }
    let mut w = create(&args.out)?;
    write_sweep(&mut w, &rows)?;
    w.flush().map_err(|e| io_err(&args.out, e))?;
    writeln!(out, "{:<8} {:>5} {:>9} {:>10}", "model", "depth", "accuracy", "seconds").map_err(report_io)?;
    for r in &rows {
        writeln!(out, "{:<8} {:>5} {:>9.4} {:>10.2}", r.model, r.depth, r.accuracy, r.seconds).map_err(report_io)?;
    }
    Ok(())
}

fn cmd_gradcheck(out: &mut dyn Write) -> Result<(), CliError> {
    let results = gradient_suite().map_err(TrainError::from)?;
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for r in &results {
        worst = worst.max(r.max_rel_error);
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        writeln!(out, "{:<22} {:>6} params  max rel. error {:.3e}  {verdict}", r.name, r.parameters, r.max_rel_error)
            .map_err(report_io)?;
        if !r.passed() {
            failed.push(r.name);
        }
    }
    writeln!(out, "max rel. error {worst:.3e} (tolerance {GRAD_TOLERANCE:.0e})").map_err(report_io)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

fn cmd_plot(args: &PlotArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| io_err(&args.input, e))?;
    let reopen = || File::open(&args.input).map_err(|e| io_err(&args.input, e));
    let chart = match header.trim_end() {
        "epoch,train_loss,train_acc,val_acc,test_acc" => plot::metrics_chart(&read_metrics(reopen()?)?),
        "model,depth,accuracy,seconds" => plot::sweep_chart(&read_sweep(reopen()?)?),
        other => {
            return Err(CliError::Usage(format!(
                "{}: unrecognised CSV header {other:?}; expected a metrics or sweep file",
                args.input.display()
            )))
        }
    };
    let mut w = create(&args.out)?;
    w.write_all(plot::render_svg(&chart).as_bytes()).map_err(|e| io_err(&args.out, e))?;
    w.flush().map_err(|e| io_err(&args.out, e))?;
    writeln!(out, "wrote {}", args.out.display()).map_err(report_io)?;
    Ok(())
}
