//! `sticky-walk`: simulate sticky reflected random walks on the orthant and
//! verify them against their invariant measure.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 failed
//! verification check (for the verify-* subcommands).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, ResolvedConfig};
use output::OutputDir;
use sticky_walk_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Validation(String),
    /// Numeric failure during computation (exit 3).
    Numeric(String),
    /// A verify-* check did not meet its tolerance (exit 4).
    CheckFailed(String),
    /// Filesystem trouble (exit 1).
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::DimensionOutOfRange(_)
            | CoreError::InvalidParameter { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::SiteOutOfLattice(_)
            | CoreError::SupportOutsideBox { .. }
            | CoreError::NegativeCoordinate { .. } => CliError::Validation(err.to_string()),
            CoreError::NonFiniteSample { .. }
            | CoreError::DegenerateModel(_)
            | CoreError::DegenerateConditional { .. }
            | CoreError::PathTooShort { .. }
            | CoreError::DegenerateCompensator => CliError::Numeric(err.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m)
            | CliError::Numeric(m)
            | CliError::CheckFailed(m)
            | CliError::Io(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sticky-walk",
    version,
    about = "Sticky reflected random walks on the orthant: sample, simulate, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// RNG seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Pinning strength β (required here or in the config file).
    #[arg(long, global = true, value_name = "X")]
    beta: Option<f64>,

    /// Output directory (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Number of simulation paths to fan out (simulate).
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,

    /// Process-time horizon T.
    #[arg(long, global = true, value_name = "T")]
    horizon: Option<f64>,

    /// Grid step h.
    #[arg(long = "grid-h", global = true, value_name = "X")]
    grid_h: Option<f64>,

    /// Reflecting outer wall L (integer multiple of h).
    #[arg(long = "grid-L", global = true, value_name = "X")]
    grid_l: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Invariant-measure quadrature: mass, per-stratum breakdown, boundary ratios.
    Quadrature,
    /// Draw invariant-measure samples by exact-conditional Gibbs sweeps.
    Sample,
    /// Simulate the walk; write a decimated event log and a summary.
    Simulate {
        /// Keep every k-th event row in the CSV.
        #[arg(long, default_value_t = 1, value_name = "K")]
        decimate: u64,
    },
    /// Long-run occupation fractions vs quadrature targets.
    Occupancy,
    /// Integration-by-parts residuals for the builtin test-function pairs.
    VerifyIbp,
    /// Ergodic averages vs quadrature targets.
    VerifyErgodic,
    /// Boundary occupation across a grid of pinning strengths.
    SweepBeta,
}

fn main() -> ExitCode {
    // Worker cap; ensembles merge in seed order, so the thread count never
    // changes results.
    if let Ok(value) = std::env::var("STICKY_WALK_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }

    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        beta: cli.beta,
        paths: cli.paths,
        horizon: cli.horizon,
        grid_h: cli.grid_h,
        grid_wall: cli.grid_l,
    };
    let cfg = ResolvedConfig::load(cli.config.as_deref(), &overrides)?;
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let out = OutputDir::create(&out_dir)?;

    match &cli.command {
        Command::Quadrature => commands::quadrature(&cfg, &out),
        Command::Sample => commands::sample(&cfg, &out),
        Command::Simulate { decimate } => commands::simulate_cmd(&cfg, &out, *decimate),
        Command::Occupancy => commands::occupancy(&cfg, &out),
        Command::VerifyIbp => commands::verify_ibp(&cfg, &out),
        Command::VerifyErgodic => commands::verify_ergodic(&cfg, &out),
        Command::SweepBeta => commands::sweep_beta(&cfg, &out),
    }
}
