use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctsysid_cli::{run_to_dir, summarize_dir, CliResult, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ctsysid", version, about = "Drift-matrix identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv and meta.json
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output` in the config
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_base: Option<u64>,
        #[arg(long)]
        experiment: Option<Experiment>,
        #[arg(long)]
        kappa_override: Option<f64>,
    },
    /// Write summary.json for a run directory
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed_base,
            experiment,
            kappa_override,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed_base {
                cfg.seed_base = s;
            }
            if let Some(e) = experiment {
                cfg.experiment = e;
            }
            if kappa_override.is_some() {
                cfg.kappa_override = kappa_override;
            }
            cfg.validate()?;
            let dir = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| ctsysid_cli::CliError::Config("no output directory given".into()))?;
            let result = run_to_dir(&cfg, &dir)?;
            eprintln!("{}: {} rows written to {}", cfg.experiment, result.rows.len(), dir.display());
        }
        Command::Summarize { input } => {
            let summary = summarize_dir(&input)?;
            eprintln!("{} groups summarized in {}", summary.groups.len(), input.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
