//! `gradops` command-line driver.
//!
//! Exit codes: 0 ok, 2 usage or parse error, 3 internal invariant violation,
//! 4 numeric divergence.

mod deconflict;
mod metrics;
mod output;
mod toy;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradops::Error;

#[derive(Debug, Parser)]
#[command(
    name = "gradops",
    version,
    about = "Multi-task gradient deconfliction and reweighting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a file of task gradients and report every intermediate quantity
    Deconflict(deconflict::DeconflictArgs),
    /// Optimize the two-task 2D benchmark from one start point
    Toy2d(toy::ToyArgs),
    /// Run the 2D benchmark over a grid of methods, alphas and start points
    Sweep(toy::SweepArgs),
    /// Train a multi-task network from a flat TOML config
    Train(train::TrainArgs),
    /// Relative change and mean rank over a method-by-task score table
    Metrics(metrics::MetricsArgs),
}

/// A failed run: the message and its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn diverged(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invariant(_) => 3,
            Error::NonFinite(_) => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    // clap reports usage errors itself with exit status 2
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Deconflict(a) => deconflict::run(&a),
        Command::Toy2d(a) => toy::run_toy(&a),
        Command::Sweep(a) => toy::run_sweep(&a),
        Command::Train(a) => train::run(&a),
        Command::Metrics(a) => metrics::run(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
