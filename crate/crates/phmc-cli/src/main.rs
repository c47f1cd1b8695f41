use clap::{Args, Parser, Subcommand};
use phmc_cli::runner::{run, RunRequest};
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiment runner for preconditioned Hamiltonian Monte Carlo on
/// spectrally represented spaces.
#[derive(Parser)]
#[command(name = "phmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (.toml or .json)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for manifest, CSVs and plots; stdout-only if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and stream states plus summary statistics
    Sample(CommonArgs),
    /// Run coupled chain pairs and record their distance per step
    Couple(CommonArgs),
    /// Sweep mean coupling times over durations and shift rules
    CouplingTimes(CommonArgs),
    /// Emit the explicit constant bundle for the configured model
    Constants(CommonArgs),
    /// Report both sides of every admissibility condition
    CheckConditions(CommonArgs),
    /// Run the property suite; nonzero exit on any failure
    Validate(CommonArgs),
    /// Search the step size meeting the target acceptance rate
    TuneStepsize(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Sample(a) => ("sample", a),
        Command::Couple(a) => ("couple", a),
        Command::CouplingTimes(a) => ("coupling-times", a),
        Command::Constants(a) => ("constants", a),
        Command::CheckConditions(a) => ("check-conditions", a),
        Command::Validate(a) => ("validate", a),
        Command::TuneStepsize(a) => ("tune-stepsize", a),
    };
    let request = RunRequest {
        command: name.to_string(),
        config: args.config.clone(),
        out: args.out.clone(),
    };
    match run(&request) {
        Ok(Some(dir)) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
