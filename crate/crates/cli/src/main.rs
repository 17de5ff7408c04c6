//! `centrank` command-line interface.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "centrank", version, about = "Exact, sampled and learned vertex centrality rankings")]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, env = "CENTRANK_THREADS")]
    threads: Option<usize>,
    /// Single-threaded reductions and no timings, so reruns give identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus of BTER networks with exact centralities.
    Gen(GenArgs),
    /// Exact degree, eigenvector, betweenness and closeness of an edge list.
    Exact(ExactArgs),
    /// Pivot-sampling estimates of betweenness and closeness.
    Sample(SampleArgs),
    /// Train a rank regressor on a corpus.
    Train(TrainArgs),
    /// Predict betweenness/closeness ranks with a trained model.
    Predict(PredictArgs),
    /// Compare approximate rankings against exact ones.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Generic,
    Specific,
}

#[derive(Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "generic")]
    pub kind: Kind,
    /// Networks (generic) or networks per size (specific); default 300 / 200.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub size_min: usize,
    #[arg(long, default_value_t = 1000)]
    pub size_max: usize,
    #[arg(long, default_value_t = 0.0)]
    pub clustering_min: f64,
    #[arg(long, default_value_t = 0.7)]
    pub clustering_max: f64,
    /// Reference edge list for a specific corpus.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [2000usize, 3000])]
    pub sizes: Vec<usize>,
    /// Use the reference's mean clustering instead of its per-degree profile.
    #[arg(long)]
    pub global_clustering: bool,
    /// Power iteration on A + I from the start.
    #[arg(long)]
    pub eigen_shift: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ExactArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub eigen_shift: bool,
}

#[derive(Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Share of vertices used as pivots.
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Betweenness,
    Closeness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitBy {
    /// Pool the vertex rows of all networks, then split.
    Rows,
    /// Keep each network entirely in one partition.
    Networks,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub attrs: usize,
    /// 1 for one target, 2 to learn betweenness and closeness jointly.
    #[arg(long, default_value_t = 1)]
    pub tasks: usize,
    /// Target of a single-task model.
    #[arg(long, value_enum, default_value = "closeness")]
    pub target: Target,
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 20, 20])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mu_dec: f64,
    #[arg(long, default_value_t = 10.0)]
    pub mu_inc: f64,
    #[arg(long, default_value_t = 1e10)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.15)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.10)]
    pub test_fraction: f64,
    #[arg(long, value_enum, default_value = "rows")]
    pub split_by: SplitBy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct PredictArgs {
    /// Model file, or a directory holding `model.json`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Attribute count; must match the model.
    #[arg(long)]
    pub attrs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Output directory of `exact`.
    #[arg(long)]
    pub exact: PathBuf,
    /// `NAME=DIR` of a `sample` or `predict` output; repeatable.
    #[arg(long = "method", required = true)]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = centrank::eval::DEFAULT_PERCENTILES.to_vec())]
    pub percentiles: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<centrank::Error> for Failure {
    fn from(e: centrank::Error) -> Self {
        use centrank::Error::*;
        match e {
            Numerical(_) | Undefined(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Settings shared by every command.
pub struct Context {
    pub threads: usize,
    pub deterministic: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Context {
        threads: if cli.deterministic { 1 } else { cli.threads.filter(|&t| t > 0).unwrap_or_else(centrank::default_threads) },
        deterministic: cli.deterministic,
    };
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Exact(a) => commands::exact(&ctx, a),
        Command::Sample(a) => commands::sample(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
