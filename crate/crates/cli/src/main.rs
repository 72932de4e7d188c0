//! `gcomp`: simulate, fit, estimate, replicate and validate from the command line.

mod commands;
mod config;
mod logging;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::UsageError;

#[derive(Parser, Debug)]
#[command(name = "gcomp", version, about = "Bayesian g-computation with a sensitivity parameter for unmeasured confounding")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log level for the JSON-line log on standard error.
    #[arg(long, global = true, default_value = "info", value_parser = parse_level)]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a long-format dataset.
    Simulate(SimulateArgs),
    /// Fit the joint model at a fixed treatment random-effect variance.
    Fit(FitArgs),
    /// Estimate regime contrasts over a list of sensitivity values.
    Estimate(EstimateArgs),
    /// Run a simulation-study grid.
    Replicate(ReplicateArgs),
    /// Check a dataset against a model specification.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the two-interval study design.
    #[arg(long)]
    pub dgp: bool,
    #[arg(long)]
    pub n: Option<usize>,
    /// Standard deviation of the treatment random effect.
    #[arg(long = "sA")]
    pub s_a: Option<f64>,
    /// Correlation between the outcome and treatment random effects.
    #[arg(long)]
    pub rho: Option<f64>,
    /// `per_dose` or `null`.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Long-format dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model specification JSON (default: the study design model).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Variance of the treatment random effect.
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Directory written by `fit`; reused instead of refitting.
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Comma-separated treatment random-effect variances.
    #[arg(long, value_delimiter = ',')]
    pub vlist: Option<Vec<f64>>,
    /// Two comma-separated regimes, e.g. `always,never`.
    #[arg(long, value_delimiter = ',')]
    pub regimes: Option<Vec<String>>,
    #[arg(long)]
    pub tau: Option<usize>,
    /// CSV with columns `id,h`; default is every subject at baseline.
    #[arg(long)]
    pub subgroup: Option<PathBuf>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the full 101-setting lattice.
    #[arg(long)]
    pub lattice: bool,
    /// Comma-separated posited treatment random-effect standard deviations.
    #[arg(long, value_delimiter = ',')]
    pub shat: Option<Vec<f64>>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_level(s: &str) -> Result<log::LevelFilter, String> {
    s.parse().map_err(|_| format!("unknown log level {s:?}"))
}

/// 2 for configuration, schema and input problems; 1 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<gcomp_core::Error>() {
            use gcomp_core::Error as E;
            return match e {
                E::Spec(_) | E::Config(_) | E::Data(_) | E::Request(_) | E::Domain(_) | E::Io(_) | E::Csv(_) | E::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError::new("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Replicate(a) => commands::replicate(a),
        Command::Validate(a) => commands::validate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init(cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
