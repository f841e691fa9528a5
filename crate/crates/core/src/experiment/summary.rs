//! Per-(scheme, sweep value) mean and standard error of a results CSV.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub sweep_axis: String,
    /// Kept verbatim from the input.
    pub sweep_value: String,
    pub trials: usize,
    pub mean_capacity_bps_hz: f64,
    /// Sample standard deviation over `sqrt(trials)`; 0 for a single trial.
    pub se_capacity_bps_hz: f64,
    /// Set when only one trial contributed.
    pub degenerate: bool,
}

const REQUIRED: [&str; 4] = ["scheme", "sweep_axis", "sweep_value", "capacity_bps_hz"];

/// Groups appear in order of first occurrence.
pub fn summarize<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut groups: Vec<(String, String, String, Vec<f64>)> = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(idx[i]).unwrap_or("").to_string();
        let value: f64 = field(3).parse().map_err(|_| {
            Error::invalid(format!("row {}: capacity `{}` is not a number", line + 1, field(3)))
        })?;
        let (scheme, axis, sweep) = (field(0), field(1), field(2));
        match groups
            .iter_mut()
            .find(|g| g.0 == scheme && g.2 == sweep)
        {
            Some(g) => g.3.push(value),
            None => groups.push((scheme, axis, sweep, vec![value])),
        }
    }

    Ok(groups
        .into_iter()
        .map(|(scheme, sweep_axis, sweep_value, xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = if n > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                scheme,
                sweep_axis,
                sweep_value,
                trials: n,
                mean_capacity_bps_hz: mean,
                se_capacity_bps_hz: se,
                degenerate: n == 1,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summarize_file(input: &Path, output: &Path) -> Result<Vec<SummaryRow>> {
    let rows = summarize(std::fs::File::open(input)?)?;
    write_summary(std::io::BufWriter::new(std::fs::File::create(output)?), &rows)?;
    Ok(rows)
}
