//! `nonplanar`: plan and simulate predictive braking on nonplanar roads.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ModeConfig;

/// Exit codes: 0 success, 1 config error, 2 infeasible, 3 solver failure,
/// 4 scenario failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Scenario(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Scenario(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "nonplanar", about = "Predictive braking on nonplanar road surfaces")]
struct Cli {
    /// Use the published model forms verbatim, including their
    /// inconsistencies, instead of the corrected ones.
    #[arg(long, global = true)]
    paper_literal: bool,
    /// Omit the timestamped header comment from output files so repeated
    /// runs are byte-identical.
    #[arg(long, global = true)]
    no_meta: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a road surface: compare analytic derivatives against finite
    /// differences on a grid.
    CheckSurface {
        /// Road JSON file.
        #[arg(long)]
        road: PathBuf,
        /// Grid resolution as SxY samples, e.g. 20x5.
        #[arg(long, default_value = "20x5")]
        grid: String,
        /// Maximum allowed finite-difference error.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Solve the speed-profile program and write the per-stage plan as CSV.
    Plan {
        #[arg(long)]
        road: PathBuf,
        #[arg(long)]
        vehicle: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a closed-loop scenario and write the telemetry log as CSV.
    Simulate {
        #[arg(long)]
        road: PathBuf,
        #[arg(long)]
        vehicle: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario file's mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a standalone conic program given as JSON.
    SolveConic {
        /// Problem JSON: {c, a, b, g, h, n_orthant, n_soc3}.
        #[arg(long = "in", value_name = "IN")]
        input: PathBuf,
        /// Solution JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in scenario pack and print a pass/fail table.
    Bench,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    None,
    DelayedDriver,
    SafetySystem,
    SafetySystemPlanar,
}

impl From<ModeArg> for ModeConfig {
    fn from(m: ModeArg) -> ModeConfig {
        match m {
            ModeArg::None => ModeConfig::None,
            ModeArg::DelayedDriver => ModeConfig::DelayedDriver,
            ModeArg::SafetySystem => ModeConfig::SafetySystem,
            ModeArg::SafetySystemPlanar => ModeConfig::SafetySystemPlanar,
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::CheckSurface { road, grid, tol } => {
            commands::check_surface(&road, &grid, tol)
        }
        Command::Plan { road, vehicle, scenario, out } => commands::plan(
            &road,
            &vehicle,
            &scenario,
            &out,
            cli.paper_literal,
            cli.no_meta,
        ),
        Command::Simulate { road, vehicle, scenario, mode, out } => commands::simulate(
            &road,
            &vehicle,
            &scenario,
            mode.map(ModeConfig::from),
            &out,
            cli.paper_literal,
            cli.no_meta,
        ),
        Command::SolveConic { input, out } => commands::solve_conic(&input, &out),
        Command::Bench => commands::bench(cli.paper_literal),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code());
        }
    }
}
