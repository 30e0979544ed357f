//! `fer` — synthesize embedding datasets, train expression heads, and emit
//! evaluation reports.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use fer_core::Error;

#[derive(Parser)]
#[command(name = "fer", version, about = "Frozen-backbone expression head training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-mixture feature file.
    Synth(commands::synth::SynthArgs),
    /// Train the general multi-output head.
    Train(commands::train::TrainArgs),
    /// Train a pairwise FC dictionary.
    PairTrain(commands::pair_train::PairTrainArgs),
    /// Evaluate a checkpoint on a feature file.
    Eval(commands::eval::EvalArgs),
    /// Re-render a JSON report as TSV or markdown.
    Report(commands::report::ReportArgs),
}

/// Config errors exit 2, data errors 3, numeric failures 4, I/O 5.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data { .. } => 3,
        Error::Numeric(_) => 4,
        Error::Io(_) => 5,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::PairTrain(args) => commands::pair_train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
