//! Command-line surface: randomize rosters, analyze trial CSVs, run
//! simulation studies, and emit design diagnostics.
//!
//! Exit codes: 0 ok, 2 data validation, 3 numerical failure, 4 simulation
//! failure rate above threshold.

mod commands;

use clap::{Parser, Subcommand};
use strata_infer::ErrorClass;

#[derive(Parser)]
#[command(
    name = "strata-infer",
    version,
    about = "Covariate-adaptive randomization and ATE inference for stratified experiments"
)]
struct Cli {
    /// Worker threads for simulation (default: STRATA_INFER_THREADS or all
    /// logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign treatment arms to a unit roster.
    Randomize(commands::randomize::RandomizeArgs),
    /// Estimate the average treatment effect from a trial CSV.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Run a Monte Carlo simulation cell or the extreme-strata sweep.
    Simulate(commands::simulate::SimulateArgs),
    /// Report design balance and stratum occupancy.
    Diagnose(commands::diagnose::DiagnoseArgs),
}

/// Unified error carrying the process exit code.
pub(crate) struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<strata_infer::Error> for CliError {
    fn from(e: strata_infer::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Simulation => 4,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(format!("csv: {e}"))
    }
}

pub(crate) type CliResult = Result<(), CliError>;

fn configure_threads(flag: Option<usize>) {
    // Precedence: flag, then environment, then rayon's default.
    let from_env = std::env::var("STRATA_INFER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn main() {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let result = match cli.command {
        Command::Randomize(args) => commands::randomize::run(args),
        Command::Analyze(args) => commands::analyze::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Diagnose(args) => commands::diagnose::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
