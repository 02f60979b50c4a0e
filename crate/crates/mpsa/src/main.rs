use clap::{Parser, Subcommand};
use mpsa::cli::{cmd_coercivity, cmd_convergence, cmd_locking, cmd_meshgen, cmd_solve, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Cell-centered finite volume solver for 2D linear elasticity with a
/// built-in coercivity auditor and verification studies.
#[derive(Parser)]
#[command(name = "mpsa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh and write it in the text format.
    Meshgen { config: PathBuf },
    /// Solve a problem; writes solution.csv and tractions.csv.
    Solve { config: PathBuf },
    /// Audit the local coercivity condition; exit 4 on failure.
    Coercivity { config: PathBuf },
    /// Refinement study; writes convergence.csv.
    Convergence { config: PathBuf },
    /// Poisson-ratio sweep; writes locking.csv.
    Locking { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (path, run): (&PathBuf, fn(&RunConfig) -> Result<(), mpsa::cli::CliError>) =
        match &cli.command {
            Command::Meshgen { config } => (config, cmd_meshgen),
            Command::Solve { config } => (config, cmd_solve),
            Command::Coercivity { config } => (config, |c| cmd_coercivity(c).map(|_| ())),
            Command::Convergence { config } => (config, cmd_convergence),
            Command::Locking { config } => (config, cmd_locking),
        };
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code as u8);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
