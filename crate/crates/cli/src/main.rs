use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ris_wdft::experiment::{self, load_config};
use ris_wdft::selftest::run_selftest;

/// Monte Carlo sweeps of RIS codebook schemes for point-to-point MIMO.
#[derive(Debug, Parser)]
#[command(name = "ris-wdft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a config file and write a CSV plus manifest.
    Run {
        /// TOML experiment config.
        #[arg(short, long)]
        config: PathBuf,
        /// Output CSV. Defaults to `output` from the config, then `results.csv`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Override the number of trials per sweep value.
        #[arg(long)]
        trials: Option<u64>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: $RIS_WDFT_WORKERS, then all cores).
        #[arg(short, long)]
        workers: Option<usize>,
    },
    /// Per-(scheme, sweep value) mean and standard error of a results CSV.
    Summarize {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the built-in sanity checks.
    Selftest,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            output,
            trials,
            seed,
            workers,
        } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.validate()?;
            let output = output
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("results.csv"));
            let workers = experiment::resolve_workers(workers)?;
            let manifest = experiment::execute(&cfg, &output, workers)?;
            println!(
                "wrote {} rows to {} (config {})",
                manifest.rows,
                output.display(),
                &manifest.config_hash[..12]
            );
        }
        Command::Summarize { input, output } => {
            let rows = experiment::summarize_file(&input, &output)
                .with_context(|| format!("summarizing {}", input.display()))?;
            println!("wrote {} groups to {}", rows.len(), output.display());
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
