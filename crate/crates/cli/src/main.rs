use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsavoid_cli::commands;

/// Avoidance controllers for linear two-agent systems on time scales:
/// synthesize, simulate, verify, and reproduce the reference examples.
#[derive(Parser)]
#[command(name = "tsavoid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the matching condition and the graininess-parametric
    /// Lyapunov equation for every graininess of the window.
    Synthesize {
        /// Run configuration (JSON).
        #[arg(short, long)]
        config: PathBuf,
        /// Also write the report as JSON.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the closed loop from every configured initial state and write
    /// one CSV + JSON trace per state.
    Simulate {
        /// Run configuration (JSON).
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory for trajectory files.
        #[arg(short = 'd', long)]
        outdir: PathBuf,
    },
    /// Check the avoidance conditions on an annulus grid around the set.
    Verify {
        /// Run configuration (JSON).
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Print the double-integrator reference controllers on R, Z, and
    /// P_{1,2}, checked against their exact fractions.
    ReproducePaper,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synthesize { config, output } => {
            commands::cmd_synthesize(config, output.as_deref())
        }
        Command::Simulate { config, outdir } => commands::cmd_simulate(config, outdir),
        Command::Verify { config } => commands::cmd_verify(config),
        Command::ReproducePaper => commands::cmd_reproduce_paper(),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(commands::exit_code(&err) as u8)
        }
    }
}
