//! Quick end-to-end sanity checks, runnable from the CLI in a few seconds.

use std::fmt;

use rand::Rng;

use crate::codebook::{dft_codebook, sequential_order};
use crate::experiment::{parse_config, run_experiment};
use crate::geometry::{sample_channels, ArrayGeometry, ChannelModel, LinkSet};
use crate::linalg::{complex_gaussian_matrix, CMatrix};
use crate::precoding::waterfill;
use crate::rng::{substream, Purpose};
use crate::training::{build_pilot, build_stacked_channel, estimate_stacked_channel, observe, StackedChannel};
use crate::weights::{build_gram_matrix, build_subspace_matrix, init_weights, kkt_iterate, OptimizerSettings, WeightProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, run: impl FnOnce() -> crate::Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn dft_orthogonality() -> crate::Result<(bool, String)> {
    let mut worst = 0.0f64;
    for size in [4usize, 9, 26] {
        let a = dft_codebook(size - 1, size, &sequential_order(size - 1))?.a_matrix;
        let g = a.adjoint() * &a - CMatrix::identity(size, size) * crate::linalg::C64::from(size as f64);
        worst = worst.max(g.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e}")))
}

fn noiseless_estimation() -> crate::Result<(bool, String)> {
    let model = ChannelModel::new(ArrayGeometry::default(), LinkSet::default());
    let cb = dft_codebook(25, 26, &sequential_order(25))?;
    let x = build_pilot(4, 4, 1e-3)?;
    let mut worst = 0.0f64;
    for t in 0..10 {
        let r = sample_channels(&model, &mut substream(0, t, Purpose::Channel))?;
        let obs = observe(&r, &cb, &x, 0.0, &mut substream(0, t, Purpose::Wdft))?;
        let est = estimate_stacked_channel(&obs)?;
        let truth = build_stacked_channel(&r);
        worst = worst.max((&est.h - &truth.h).norm() / truth.h.norm());
    }
    Ok((worst <= 1e-9, format!("max relative error {worst:.2e}")))
}

fn kkt_monotone() -> crate::Result<(bool, String)> {
    let mut worst_drop = 0.0f64;
    let mut worst_modulus = 0.0f64;
    for t in 0..20 {
        let mut rng = substream(1, t, Purpose::Random);
        let n = rng.random_range(2..=12);
        let m_t = rng.random_range(1..=3);
        let m_r = rng.random_range(1..=3);
        let h = StackedChannel {
            h: complex_gaussian_matrix((n + 1) * m_t, m_r, 1.0, &mut rng),
            tx_antennas: m_t,
        };
        let p = build_subspace_matrix(&h, 1)?;
        let b = build_gram_matrix(&p, m_t)?;
        let cb = dft_codebook(n, n + 1, &sequential_order(n))?;
        let k0 = init_weights(&cb.a_matrix, &cb.codewords[0])?;
        let sol = kkt_iterate(&WeightProblem {
            b,
            a_q: cb.a_matrix,
            k0,
            settings: OptimizerSettings::default(),
        })?;
        for w in sol.objective_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1] - 1e-9 * w[0].abs());
        }
        for z in sol.phi.iter() {
            worst_modulus = worst_modulus.max((z.norm() - 1.0).abs());
        }
    }
    Ok((
        worst_drop <= 0.0 && worst_modulus <= 1e-6,
        format!("largest objective drop {worst_drop:.2e}, modulus error {worst_modulus:.2e}"),
    ))
}

fn waterfilling_budget() -> crate::Result<(bool, String)> {
    let mut rng = substream(2, 0, Purpose::Random);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut s: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let p = rng.random_range(0.1..10.0);
        let wf = waterfill(&s, p, 0.5)?;
        worst = worst.max((wf.powers.iter().sum::<f64>() - p).abs() / p);
    }
    Ok((worst <= 1e-9, format!("max relative budget error {worst:.2e}")))
}

fn determinism() -> crate::Result<(bool, String)> {
    let cfg = parse_config(
        "trials = 2\n[sweep]\naxis = \"q\"\nvalues = [2, 6]\n",
    )?;
    let a = run_experiment(&cfg, 1)?;
    let b = run_experiment(&cfg, 3)?;
    Ok((a == b, format!("{} rows, identical across worker counts: {}", a.len(), a == b)))
}

pub fn run_selftest() -> Vec<Check> {
    vec![
        check("dft_orthogonality", dft_orthogonality),
        check("noiseless_estimation", noiseless_estimation),
        check("kkt_monotone", kkt_monotone),
        check("waterfilling_budget", waterfilling_budget),
        check("determinism", determinism),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_selftest() {
            assert!(c.passed, "{c}");
        }
    }
}
