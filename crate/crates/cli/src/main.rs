use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use htrpm::Variant;

mod commands;

/// Cluster functional binary trajectories across periods.
#[derive(Debug, Parser)]
#[command(name = "htrpm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate simulated panels with their ground truth.
    Simulate(SimulateArgs),
    /// Run one Markov chain on a dataset.
    Fit(FitArgs),
    /// Point estimates, WAIC, curves and transitions from a chain.
    Summarize(SummarizeArgs),
    /// Concentration sensitivity grid on one dataset.
    Sweep(SweepArgs),
    /// Replicated simulation study over scenarios, seeds and variants.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: u8,
    /// Seed of the first replicate; replicate r uses seed + r - 1.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Mean of the transition coefficients (scenario 2 only).
    #[arg(long, allow_hyphen_values = true)]
    pub mu_eta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

/// Sampler settings shared by every command that runs chains.
#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat `key = value` file of hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set alpha=0.5`; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Output directory for the archive, checkpoint and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Write a checkpoint every K sweeps (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many sweeps, leaving a checkpoint and no archive.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub chain: PathBuf,
    /// Simulation truth; adds VI, ARI, MSE and fixed-flag accuracy.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Points of the time grid for the cluster curves.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    /// Grid such as `a0=1,0.1,0.01;a=0.1,0.01,0.001`.
    #[arg(long)]
    pub grid: String,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub scenario: u8,
    /// Seeds as a list or range, e.g. `1-10` or `1,4,7`.
    #[arg(long, default_value = "1-10")]
    pub seeds: String,
    /// Comma-separated transition means (scenario 2).
    #[arg(long, allow_hyphen_values = true)]
    pub mu_eta: Option<String>,
    /// Comma-separated variants.
    #[arg(long, default_value = "htrpm,hdp,trpm,dp")]
    pub variants: String,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 3000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    /// Per-job results CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: htrpm::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
