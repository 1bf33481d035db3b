use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochrank::{commands, AppResult, Run};

#[derive(Parser)]
#[command(name = "stochrank", version, about = "Stochastic ranking process: simulation, limit and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replica and write snapshots and the boundary trajectory.
    Simulate(Args),
    /// Tabulate the boundary curve and the limit field.
    Limit(Args),
    /// Run the oracle and identity checks.
    Verify(Args),
    /// Run the multi-size convergence study.
    Convergence(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(command: &Command) -> AppResult<Vec<String>> {
    let (Command::Simulate(args) | Command::Limit(args) | Command::Verify(args) | Command::Convergence(args)) = command;
    let mut run = Run::load(&args.config)?;
    if let Some(seed) = args.seed {
        run.config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| run.config.output_dir.clone());
    match command {
        Command::Simulate(_) => commands::simulate(&run, &out),
        Command::Limit(_) => commands::limit(&run, &out),
        Command::Verify(_) => commands::verify(&run, &out),
        Command::Convergence(_) => commands::convergence(&run, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("FAIL {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
