use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maglev_nmpc_cli::commands;
use maglev_nmpc_cli::config::{defaults_table, ConfigDocument};
use maglev_nmpc_cli::CliError;

/// Closed-loop NMPC simulation suite for an electromagnetic-suspension
/// maglev levitation unit.
#[derive(Parser)]
#[command(name = "maglev-nmpc", version, about)]
struct Cli {
    /// Scenario configuration file (built-in defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for logs, metrics and plots.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Overrides the guideway seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Machine-readable JSON output where supported.
    #[arg(long, global = true)]
    json: bool,

    /// Prints the full defaults table and exits.
    #[arg(long, global = true)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Solves and prints the nominal equilibrium with its residuals.
    Equilibrium,
    /// Runs one closed-loop scenario and writes log, metrics and plots.
    Simulate,
    /// Runs several controllers over the identical guideway and compares.
    Compare {
        /// Comma-separated controller names.
        #[arg(long, value_delimiter = ',', default_value = "C1M,C2M,C2ML")]
        controllers: Vec<String>,
    },
    /// Recomputes spectrum and comfort metrics from an existing log CSV.
    Spectrum {
        /// Ride-log CSV produced by `simulate` or `compare`.
        #[arg(long)]
        log: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.print_defaults {
        print!("{}", defaults_table());
        return Ok(());
    }
    let (config, config_dir) = match &cli.config {
        Some(path) => {
            let dir = path
                .parent()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            (ConfigDocument::load(path)?, dir)
        }
        None => (ConfigDocument::parse("")?, PathBuf::from(".")),
    };

    match cli.command {
        None => Err(CliError::Config(
            "no command given; try `simulate`, `compare`, `equilibrium` or `spectrum`".into(),
        )),
        Some(Command::Equilibrium) => {
            println!("{}", commands::cmd_equilibrium(&config, cli.json)?);
            Ok(())
        }
        Some(Command::Simulate) => {
            let (summary, failed) =
                commands::cmd_simulate(&config, &config_dir, &cli.out, cli.seed, cli.json)?;
            println!("{summary}");
            if failed {
                return Err(CliError::Runtime(
                    "levitation failure; partial outputs retained".into(),
                ));
            }
            Ok(())
        }
        Some(Command::Compare { controllers }) => {
            let (summary, failed) = commands::cmd_compare(
                &config,
                &config_dir,
                &controllers,
                &cli.out,
                cli.seed,
                cli.json,
            )?;
            println!("{summary}");
            if failed {
                return Err(CliError::Runtime(
                    "at least one run ended in levitation failure".into(),
                ));
            }
            Ok(())
        }
        Some(Command::Spectrum { log }) => {
            println!("{}", commands::cmd_spectrum(&config, &log, &cli.out)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
