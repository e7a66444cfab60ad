//! Command-line pipeline: discovery, baseline calibration, physics audits and
//! HTML reports, each writing a hashed artifact directory.

pub mod audit;
pub mod calibrate;
mod common;
pub mod discover;
pub mod manifest;
pub mod plots;
pub mod report;
pub mod svg;

use clap::{Parser, Subcommand};

pub use common::{load_data, resolve_skill, LoadedData};

/// Exit status for runs that completed but whose model fails a physics check.
pub const EXIT_PHYSICS_VIOLATION: u8 = 2;
/// Exit status for configuration, input and convergence errors.
pub const EXIT_ERROR: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "hyperlaw", version, about = "Physics-constrained discovery of hyperelastic strain-energy functions")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the island search and rank the Pareto front.
    Discover(discover::DiscoverArgs),
    /// Fit a classical baseline model.
    Calibrate(calibrate::CalibrateArgs),
    /// Check a model for convexity, stiffness and locking behavior.
    Audit(audit::AuditArgs),
    /// Bundle an artifact directory into one HTML page.
    Report(report::ReportArgs),
}

/// Runs a command and returns its exit status; errors are printed to stderr.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Discover(a) => discover::run(&a),
        Command::Calibrate(a) => calibrate::run(&a),
        Command::Audit(a) => audit::run(&a),
        Command::Report(a) => report::run(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
