//! `funcinfo` — train small classifiers, compute gradient-information
//! feature attributions, evaluate them under negative perturbations, and
//! verify the estimator guarantees.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags,
//! missing or malformed files, unknown methods), 3 for numeric failures
//! (degenerate curves, covariances that cannot be factored, failed
//! verification checks).

mod commands;
mod config;
mod error;
mod pgm;

use clap::{Parser, Subcommand};

use crate::config::{
    CompareArgs, EvaluateArgs, ExplainArgs, TrainArgs, VerifyArgs,
};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "funcinfo", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a multilayer perceptron on a CSV dataset.
    Train(TrainArgs),
    /// Compute a feature attribution for one example.
    Explain(ExplainArgs),
    /// Run the negative-perturbation protocol over a dataset.
    Evaluate(EvaluateArgs),
    /// Check the estimator guarantees and report pass/fail per check.
    Verify(VerifyArgs),
    /// Spearman rank correlation between two attribution files.
    Compare(CompareArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Explain(args) => commands::explain::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Compare(args) => commands::compare::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
