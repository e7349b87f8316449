use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use egd_cli::commands::{self, Options, TABLE1_REFERENCE};

#[derive(Parser)]
#[command(
    name = "egd",
    version,
    about = "Forward-looking evolutionary game dynamics"
)]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory (overrides the experiment file and EGD_OUTPUT_ROOT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write density.csv, eta.csv and summary.csv.
    Run { file: PathBuf },
    /// Sweep epsilon and write mean actions, errors and convergence rates.
    Table1 {
        file: PathBuf,
        /// Reference mean action the errors are measured against.
        #[arg(long, default_value_t = TABLE1_REFERENCE)]
        reference: f64,
    },
    /// Compare the solvers with independent reference solvers.
    OracleCheck { file: PathBuf },
    /// Run the [sweep] section, one subdirectory per value.
    Sweep { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        out: cli.out,
        jobs: cli.jobs.max(1),
        quiet: cli.quiet,
    };
    let outcome = match &cli.command {
        Command::Run { file } => commands::cmd_run(file, &opts).map(|_| true),
        Command::Table1 { file, reference } => {
            commands::cmd_table1(file, *reference, &opts).map(|_| true)
        }
        Command::OracleCheck { file } => commands::cmd_oracle_check(file, &opts),
        Command::Sweep { file } => commands::cmd_sweep(file, &opts).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
