//! Monte Carlo sweep execution and result files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SweepPoint};
use crate::error::{Error, Result};
use crate::geometry::sample_channels;
use crate::precoding::CapacityRecord;
use crate::rng::{substream, Purpose};
use crate::schemes::run_scheme;

/// Environment variable consulted when no worker count is given.
pub const WORKERS_ENV: &str = "RIS_WDFT_WORKERS";

pub const CSV_HEADER: &str =
    "scheme,sweep_axis,sweep_value,trial,capacity_bps_hz,iterations,converged,q,n,p_d_dbm,p_u_dbm,seed";

/// Explicit count, then `RIS_WDFT_WORKERS`, then the available parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return if w == 0 { Err(Error::invalid("worker count must be at least 1")) } else { Ok(w) };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::invalid(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs all trials of one sweep value for every configured scheme.
///
/// The channel and every scheme draw from substreams keyed by trial only, so
/// all sweep values share channel realizations.
pub fn run_trial(cfg: &ExperimentConfig, point: &SweepPoint, trial: u64) -> Result<Vec<CapacityRecord>> {
    let seed = cfg.master_seed;
    let realization = sample_channels(&point.model, &mut substream(seed, trial, Purpose::Channel))?;
    point
        .schemes
        .iter()
        .map(|spec| {
            let mut rng = substream(seed, trial, spec.kind.purpose());
            let out = run_scheme(&realization, spec, &point.scheme_config, &mut rng)?;
            Ok(CapacityRecord {
                scheme: out.kind.label().to_string(),
                sweep_axis: cfg.sweep.axis.name().to_string(),
                sweep_value: point.value,
                trial,
                capacity: out.capacity,
                iterations: out.iterations,
                converged: out.converged,
                q_used: out.q_used,
                n_elements: point.n,
                p_d_dbm: point.p_d_dbm,
                p_u_dbm: point.p_u_dbm,
                seed,
            })
        })
        .collect()
}

/// All records, ordered by (sweep value index, trial, scheme position).
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<CapacityRecord>> {
    cfg.validate()?;
    let points = cfg
        .sweep
        .values
        .iter()
        .map(|&v| cfg.point(v))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    log::info!(
        "{} sweep values x {} trials x {} schemes on {} workers",
        points.len(),
        cfg.trials,
        cfg.schemes.len(),
        workers
    );
    // Indexed collect keeps task order regardless of scheduling.
    let chunks: Vec<Vec<CapacityRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, t)| run_trial(cfg, &points[i], t))
            .collect::<Result<_>>()
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn write_records<W: Write>(writer: W, records: &[CapacityRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<CapacityRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the resolved configuration serialized as JSON.
    pub config_hash: String,
    pub master_seed: u64,
    pub trials: u64,
    pub rows: usize,
    pub workers: usize,
    pub output: PathBuf,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: ExperimentConfig,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&json)))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

fn partial_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    output.with_file_name(name)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs the sweep and writes `output` plus its manifest.
///
/// Rows go to `<output>.partial` first and are renamed into place on
/// success; the partial file is removed on any failure.
pub fn execute(cfg: &ExperimentConfig, output: &Path, workers: usize) -> Result<Manifest> {
    let started = unix_now();
    let partial = partial_path(output);
    let result = (|| {
        let records = run_experiment(cfg, workers)?;
        let file = fs::File::create(&partial)?;
        write_records(std::io::BufWriter::new(file), &records)?;
        fs::rename(&partial, output)?;
        Ok(records.len())
    })();
    let rows = match result {
        Ok(rows) => rows,
        Err(e) => {
            let _ = fs::remove_file(&partial);
            return Err(e);
        }
    };

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg)?,
        master_seed: cfg.master_seed,
        trials: cfg.trials,
        rows,
        workers,
        output: output.to_path_buf(),
        started_unix: started,
        finished_unix: unix_now(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(manifest_path(output), json + "\n")?;
    Ok(manifest)
}
