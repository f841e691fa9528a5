//! Config-driven Monte Carlo sweeps: parse, run, write CSV + manifest, summarize.

pub mod config;
pub mod runner;
pub mod summary;

pub use config::{load_config, parse_config, ExperimentConfig, SweepAxis, SweepPoint};
pub use runner::{execute, resolve_workers, run_experiment, Manifest, CSV_HEADER, WORKERS_ENV};
pub use summary::{summarize, summarize_file, SummaryRow};
