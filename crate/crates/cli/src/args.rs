use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deep_disagg::exact::ExactInit;
use deep_disagg::SolverKind;

#[derive(Debug, Parser)]
#[command(name = "deep-disagg", version, about = "Deep sparse coding energy disaggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic homes (train/ and test/) and their generating models.
    Synth(SynthArgs),
    /// Learn one dictionary cascade per appliance.
    Train(TrainArgs),
    /// Split aggregate readings into per-appliance estimates.
    Disaggregate(DisaggArgs),
    /// Score estimates against ground truth.
    Evaluate(EvalArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Disaggregate(_) => "disaggregate",
            Command::Evaluate(_) => "evaluate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub appliances: usize,
    /// Widths of the generating cascade, e.g. `24,12`.
    #[arg(long, value_delimiter = ',', default_value = "24,12")]
    pub widths: Vec<usize>,
    /// Samples per window.
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub homes: usize,
    #[arg(long, default_value_t = 50)]
    pub windows_per_home: usize,
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    /// Standard deviation of additive noise (readings are clamped at zero).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of homes that go to train/.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Seconds between readings.
    #[arg(long, default_value_t = 600)]
    pub sample_period: i64,
    #[arg(long, default_value_t = 1_300_000_000)]
    pub start_timestamp: i64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Shallow,
    Greedy,
    Exact,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Shallow => SolverKind::Shallow,
            Solver::Greedy => SolverKind::Greedy,
            Solver::Exact => SolverKind::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Random,
    FromGreedy,
}

impl From<Init> for ExactInit {
    fn from(i: Init) -> Self {
        match i {
            Init::Random => ExactInit::Random,
            Init::FromGreedy => ExactInit::FromGreedy,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// A home CSV or a directory of them.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Solver::Exact)]
    pub solver: Solver,
    /// Layer widths, first layer first, e.g. `144,100,80`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    /// Coupling weights, one per layer boundary (default 1 each).
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    /// Alternations (shallow), per-layer alternations (greedy) or outer
    /// iterations (exact). Defaults to the solver's own.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Per-layer alternations of the greedy warm start.
    #[arg(long)]
    pub greedy_iters: Option<usize>,
    /// Relative objective change that stops the exact solver; 0 never stops early.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Init::FromGreedy)]
    pub init: Init,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per window.
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    /// Average readings into windows of this many seconds before training.
    #[arg(long)]
    pub resample: Option<i64>,
    /// Iteration cap of every inner sparse coding solve.
    #[arg(long)]
    pub ista_iters: Option<usize>,
    /// Appliances to train (default: every appliance column).
    #[arg(long, value_delimiter = ',')]
    pub appliances: Option<Vec<String>>,
    /// Worker threads; appliances train independently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DisaggArgs {
    /// Directory of model JSON files.
    #[arg(long)]
    pub models: PathBuf,
    /// A CSV with an `aggregate` column, or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2000)]
    pub ista_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub ista_tol: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Home CSV (or directory) with the actual appliance readings.
    #[arg(long)]
    pub truth: PathBuf,
    /// Estimates CSV (or directory) written by `disaggregate`.
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-appliance SVG plots of actual vs estimated readings.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Fail unless every recorded output comes out byte-identical.
    #[arg(long)]
    pub check: bool,
}
