use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emergence_cli::{execute, Command, RunOptions};

#[derive(Parser)]
#[command(name = "emergence-lab", version, about = "Center-of-mass emergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Coordinate-transform identities for a list of atom counts.
    CheckCoords(Common),
    /// Molecular dynamics of one scenario.
    Md(Common),
    /// Ensemble statistics and fluctuation scaling.
    Ensemble(Common),
    /// Two-particle quantum factorization experiment.
    Quantum(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "EMERGENCE_LAB_WORKERS")]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, c) = match cli.command {
        Sub::CheckCoords(c) => (Command::CheckCoords, c),
        Sub::Md(c) => (Command::Md, c),
        Sub::Ensemble(c) => (Command::Ensemble, c),
        Sub::Quantum(c) => (Command::Quantum, c),
    };
    let opts = RunOptions {
        config: c.config,
        out: c.out,
        seed: c.seed,
        workers: c.workers,
    };
    match execute(command, &opts) {
        Ok(summary) => {
            print!("{}", summary.text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("emergence-lab {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
