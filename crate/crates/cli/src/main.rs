use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod output;

use output::Failure;

/// Cluster multivariate normal estimates by exact marginal likelihood.
#[derive(Debug, Parser)]
#[command(name = "mvnclust", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset with known clusters.
    Simulate(SimulateArgs),
    /// Score dendrogram cuts over a range of k and report the chosen k.
    Select(SelectArgs),
    /// Produce one clustering and its likelihood breakdown.
    Cluster(ClusterArgs),
    /// Score a given assignment of items to clusters.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Flat,
    Normal,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PriorArgs {
    /// Prior on cluster means.
    #[arg(long, value_enum, default_value = "flat")]
    pub prior: PriorKind,
    /// Variance σ₀² of the normal prior (precision I/σ₀²); default 1.
    #[arg(long)]
    pub prior_sigma2: Option<f64>,
    /// JSON nested array holding a general prior precision matrix.
    #[arg(long, conflicts_with = "prior_sigma2")]
    pub prior_precision_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceArg {
    /// Bhattacharyya distances handed to Ward-D2 unchanged.
    AsIs,
    /// Square roots of the Bhattacharyya distances.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML simulation config.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_parser = ["high-snr", "low-snr", "low-snr-noisy"])]
    pub preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: DatasetFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// Dataset file (.json, or .csv).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Smallest k scored (default 1).
    #[arg(long)]
    pub k_min: Option<usize>,
    /// Largest k scored (default: number of items).
    #[arg(long)]
    pub k_max: Option<usize>,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Significance level for the equal-means test.
    #[arg(long, default_value_t = mvnclust::stats::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "as-is")]
    pub distance: DistanceArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchArg {
    Dendrogram,
    Greedy,
    Metropolis,
}

/// Number of clusters, or `auto` to pick the likelihood maximum among dendrogram cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KChoice {
    Auto,
    Fixed(usize),
}

fn parse_k(s: &str) -> Result<KChoice, String> {
    if s == "auto" {
        return Ok(KChoice::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(KChoice::Fixed(k)),
        _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clusters for the dendrogram cut that is reported (dendrogram)
    /// or used as the starting point (greedy, metropolis).
    #[arg(long, value_parser = parse_k, default_value = "auto")]
    pub k: KChoice,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, value_enum, default_value = "dendrogram")]
    pub search: SearchArg,
    /// Greedy: random restarts. Metropolis: additional chains.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Greedy: sweep limit. Metropolis: chain length in sweeps of n proposals.
    #[arg(long, default_value_t = 100)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "as-is")]
    pub distance: DistanceArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV with columns `id,cluster`.
    #[arg(long)]
    pub assignment: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Also write report.json and manifest.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Select(a) => commands::select(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Evaluate(a) => commands::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
