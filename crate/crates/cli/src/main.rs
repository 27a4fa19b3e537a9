use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smagda_cli::commands;

#[derive(Parser)]
#[command(name = "smagda", version, about = "sm-AGDA experiments: ensembles, bounds, DRO runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte Carlo ensemble.
    RunEnsemble {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the quantile bound over the confidence mesh.
    Bound {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an ensemble's terminal samples with the bound.
    Compare {
        ensemble_dir: PathBuf,
        bound_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune and run distributionally robust logistic regression.
    Dro {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the concentration inequality.
    CheckConcentration {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a LIBSVM file and report its dimensions.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        min_d1: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunEnsemble { config, out } => commands::cmd_run_ensemble(config, out),
        Command::Bound { config, out } => commands::cmd_bound(config, out),
        Command::Compare {
            ensemble_dir,
            bound_config,
            out,
        } => commands::cmd_compare(ensemble_dir, bound_config, out),
        Command::Dro { config, out } => commands::cmd_dro(config, out),
        Command::CheckConcentration { config, out } => commands::cmd_check_concentration(config, out),
        Command::Ingest { path, min_d1, out } => commands::cmd_ingest(path, *min_d1, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
