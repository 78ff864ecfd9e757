use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ronet_cli::commands::{decompose, degrade, evaluate, restore, train};

/// Rank-one decomposition and reconstruction pipeline for image restoration.
#[derive(Parser)]
#[command(name = "ronet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an image into rank-one components plus residual.
    Decompose(decompose::DecomposeArgs),
    /// Build paired hr/ and lr/ training directories from clean images.
    Degrade(degrade::DegradeArgs),
    /// Train the decomposition network on clean patches.
    TrainRodec(train::TrainRodecArgs),
    /// Train the reconstruction network on paired patches.
    TrainRonet(train::TrainRonetArgs),
    /// Restore a directory of degraded images.
    Restore(restore::RestoreArgs),
    /// Score restored images against ground truth.
    Evaluate(evaluate::EvaluateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(args) => decompose::run(args),
        Command::Degrade(args) => degrade::run(args),
        Command::TrainRodec(args) => train::run_rodec(args),
        Command::TrainRonet(args) => train::run_ronet(args),
        Command::Restore(args) => restore::run(args),
        Command::Evaluate(args) => evaluate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
