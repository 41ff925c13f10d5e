use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hilbert_carma_cli::commands::{self, CheckStatus};

#[derive(Parser)]
#[command(
    name = "hcarma",
    version,
    about = "Hilbert-space CARMA processes: simulation, analysis and validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of observation paths to CSV plus a run manifest
    Simulate(IoArgs),
    /// Report spectrum, stability, stationary and innovation covariances,
    /// and characteristic-functional probe values
    Analyze(IoArgs),
    /// Run the cross-method consistency checks and report pass/fail
    Validate(ValidateArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for path-level parallelism (default: rayon's choice)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Optional directory for the JSON check report
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for path-level parallelism
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => {
            commands::cmd_simulate(&args.scenario, &args.out, args.seed, args.threads)
                .map(|()| ExitCode::SUCCESS)
        }
        Command::Analyze(args) => {
            commands::cmd_analyze(&args.scenario, &args.out, args.seed, args.threads)
                .map(|()| ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            commands::cmd_validate(&args.scenario, args.out.as_deref(), args.seed, args.threads)
                .map(|results| {
                    if results.iter().any(|r| r.status == CheckStatus::Fail) {
                        // Numerical-failure exit code for failed checks.
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                })
        }
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
