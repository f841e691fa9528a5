//! End-to-end schemes for one channel realization.
//!
//! Every scheme designs its RC vector and precoder from what it observed in
//! training and is then scored on the true channel:
//!
//! * `Random`: one random RC vector, one training block to estimate `H_e`.
//! * `RanC` / `DFTC`: train every codeword of a random / DFT codebook, keep
//!   the codeword whose estimated channel promises the highest capacity.
//! * `WDFT` / `EWDFT`: train `Q` DFT codewords (sequential / LoS-aligned
//!   order), estimate the stacked channel, optimize codeword weights and
//!   transmit along the composed RC vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{
    dft_codebook, env_aware_order, random_codebook, random_phases, sequential_order, AntennaPair,
    Codebook, Ordering,
};
use crate::error::{Error, Result};
use crate::geometry::ChannelRealization;
use crate::linalg::{numerical_rank, svd_sorted, CMatrix, CVector};
use crate::precoding::{capacity, effective_channel, svd_precoder};
use crate::rng::Purpose;
use crate::training::{
    build_pilot, estimate_composite_per_block, estimate_stacked_channel, observe, uplink_receive,
    PilotConfig, TrainingObservation,
};
use crate::weights::{
    build_gram_matrix, build_subspace_matrix, init_weights, kkt_iterate, OptimizerSettings,
    WeightProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Random,
    RanC,
    Dftc,
    Wdft,
    Ewdft,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Random,
        SchemeKind::RanC,
        SchemeKind::Dftc,
        SchemeKind::Wdft,
        SchemeKind::Ewdft,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Random => "RANDOM",
            SchemeKind::RanC => "RANC",
            SchemeKind::Dftc => "DFTC",
            SchemeKind::Wdft => "WDFT",
            SchemeKind::Ewdft => "EWDFT",
        }
    }

    pub fn purpose(self) -> Purpose {
        match self {
            SchemeKind::Random => Purpose::Random,
            SchemeKind::RanC => Purpose::RanC,
            SchemeKind::Dftc => Purpose::Dftc,
            SchemeKind::Wdft => Purpose::Wdft,
            SchemeKind::Ewdft => Purpose::Ewdft,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RANDOM" => Ok(SchemeKind::Random),
            "RANC" => Ok(SchemeKind::RanC),
            "DFTC" => Ok(SchemeKind::Dftc),
            "WDFT" => Ok(SchemeKind::Wdft),
            "EWDFT" => Ok(SchemeKind::Ewdft),
            "CE_PBF" | "CE&PBF" => Err(Error::invalid(
                "the CE & PBF baseline is reserved but not implemented",
            )),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Training overhead (codewords observed). Ignored by `Random`.
    pub q: usize,
    /// Codeword order for DFT-based schemes. `Ewdft` always uses
    /// environment-aware ordering.
    pub ordering: Ordering,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, q: usize) -> Self {
        Self {
            kind,
            q,
            ordering: Ordering::Sequential,
        }
    }

    pub fn effective_ordering(&self) -> Ordering {
        match self.kind {
            SchemeKind::Ewdft => Ordering::EnvironmentAware,
            _ => self.ordering,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.q == 0 {
            return Err(Error::invalid("Q must be at least 1"));
        }
        if matches!(self.kind, SchemeKind::Dftc | SchemeKind::Wdft | SchemeKind::Ewdft)
            && self.q > n + 1
        {
            return Err(Error::invalid(format!(
                "{}: Q = {} exceeds N + 1 = {}",
                self.kind,
                self.q,
                n + 1
            )));
        }
        Ok(())
    }
}

/// Link budget and algorithm settings shared by all schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub pilot: PilotConfig,
    /// Total downlink transmit power `p_d` (W).
    pub downlink_power: f64,
    /// UE noise power (W).
    pub ue_noise: f64,
    /// Requested data streams `M_s`.
    pub streams: usize,
    pub optimizer: OptimizerSettings,
    pub antenna_pair: AntennaPair,
    /// Training blocks see no noise.
    pub noiseless_training: bool,
    /// Random scheme designs `W` on the true channel instead of a training block.
    pub genie_random: bool,
}

impl SchemeConfig {
    fn training_noise(&self) -> f64 {
        if self.noiseless_training {
            0.0
        } else {
            self.pilot.bs_noise
        }
    }

    fn streams_for(&self, h: &CMatrix) -> usize {
        self.streams.min(h.nrows()).min(h.ncols())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub kind: SchemeKind,
    /// Achieved capacity on the true channel (bits/s/Hz).
    pub capacity: f64,
    pub q_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// RC vector used for the downlink.
    pub phi: CVector,
    /// Index (within the trained codebook) of the best observed codeword.
    pub selected: Option<usize>,
    /// Estimated capacity of each trained codeword, in training order.
    pub scores: Vec<f64>,
}

/// Designs `W` on `estimate` and evaluates it on the true channel for `phi`.
fn evaluate(
    r: &ChannelRealization,
    phi: &CVector,
    estimate: &CMatrix,
    cfg: &SchemeConfig,
) -> Result<f64> {
    let streams = cfg.streams_for(estimate);
    let pre = svd_precoder(estimate, streams, cfg.downlink_power, cfg.ue_noise)?;
    capacity(&effective_channel(r, phi)?, &pre.w, cfg.ue_noise)
}

/// Capacity the transmitter expects from a channel estimate.
pub fn estimated_capacity(estimate: &CMatrix, cfg: &SchemeConfig) -> Result<f64> {
    let streams = cfg.streams_for(estimate);
    let pre = svd_precoder(estimate, streams, cfg.downlink_power, cfg.ue_noise)?;
    capacity(estimate, &pre.w, cfg.ue_noise)
}

struct Selection {
    index: usize,
    scores: Vec<f64>,
    estimates: Vec<CMatrix>,
}

fn select_best(obs: &TrainingObservation, cfg: &SchemeConfig) -> Result<Selection> {
    let estimates = obs
        .per_block
        .iter()
        .map(|y| estimate_composite_per_block(y, &obs.pilot))
        .collect::<Result<Vec<_>>>()?;
    let scores = estimates
        .iter()
        .map(|h| estimated_capacity(h, cfg))
        .collect::<Result<Vec<_>>>()?;
    // First maximum wins.
    let index = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > scores[best] { i } else { best });
    Ok(Selection {
        index,
        scores,
        estimates,
    })
}

pub fn run_random<R: Rng + ?Sized>(
    r: &ChannelRealization,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    let phi = random_phases(r.ris_elements(), rng);
    let (estimate, q_used) = if cfg.genie_random {
        (effective_channel(r, &phi)?, 0)
    } else {
        cfg.pilot.validate(r.rx_antennas())?;
        let x = build_pilot(r.rx_antennas(), cfg.pilot.tau, cfg.pilot.uplink_power)?;
        let y = uplink_receive(r, &phi, &x, cfg.training_noise(), rng)?;
        (estimate_composite_per_block(&y, &x)?, 1)
    };
    Ok(SchemeOutcome {
        kind: SchemeKind::Random,
        capacity: evaluate(r, &phi, &estimate, cfg)?,
        q_used,
        iterations: 0,
        converged: true,
        phi,
        selected: None,
        scores: Vec::new(),
    })
}

/// Conventional codebook scheme: train all codewords, transmit on the best one.
pub fn run_codebook_select<R: Rng + ?Sized>(
    r: &ChannelRealization,
    codebook: &Codebook,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    if codebook.is_empty() || codebook.ris_elements() != r.ris_elements() {
        return Err(Error::invalid("codebook does not match the RIS"));
    }
    cfg.pilot.validate(r.rx_antennas())?;
    let x = build_pilot(r.rx_antennas(), cfg.pilot.tau, cfg.pilot.uplink_power)?;
    let obs = observe(r, codebook, &x, cfg.training_noise(), rng)?;
    let sel = select_best(&obs, cfg)?;
    let phi = codebook.codewords[sel.index].clone();
    Ok(SchemeOutcome {
        kind: SchemeKind::Dftc,
        capacity: evaluate(r, &phi, &sel.estimates[sel.index], cfg)?,
        q_used: codebook.len(),
        iterations: 0,
        converged: true,
        phi,
        selected: Some(sel.index),
        scores: sel.scores,
    })
}

fn configuration_order(
    r: &ChannelRealization,
    ordering: Ordering,
    pair: AntennaPair,
) -> Result<Vec<usize>> {
    match ordering {
        Ordering::Sequential => Ok(sequential_order(r.ris_elements())),
        Ordering::EnvironmentAware => env_aware_order(&r.los_d, &r.los_r, &r.los_t, pair),
    }
}

pub fn run_ranc<R: Rng + ?Sized>(
    r: &ChannelRealization,
    q: usize,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    let codebook = random_codebook(r.ris_elements(), q, rng)?;
    let mut out = run_codebook_select(r, &codebook, cfg, rng)?;
    out.kind = SchemeKind::RanC;
    Ok(out)
}

pub fn run_dftc<R: Rng + ?Sized>(
    r: &ChannelRealization,
    spec: &SchemeSpec,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    spec.validate(r.ris_elements())?;
    let order = configuration_order(r, spec.effective_ordering(), cfg.antenna_pair)?;
    let codebook = dft_codebook(r.ris_elements(), spec.q, &order)?;
    run_codebook_select(r, &codebook, cfg, rng)
}

/// Weighted DFT codebook scheme.
pub fn run_wdft<R: Rng + ?Sized>(
    r: &ChannelRealization,
    spec: &SchemeSpec,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    let n = r.ris_elements();
    spec.validate(n)?;
    cfg.pilot.validate(r.rx_antennas())?;
    let kind = match spec.effective_ordering() {
        Ordering::Sequential => SchemeKind::Wdft,
        Ordering::EnvironmentAware => SchemeKind::Ewdft,
    };

    let order = configuration_order(r, spec.effective_ordering(), cfg.antenna_pair)?;
    let codebook = dft_codebook(n, spec.q, &order)?;
    let x = build_pilot(r.rx_antennas(), cfg.pilot.tau, cfg.pilot.uplink_power)?;
    let obs = observe(r, &codebook, &x, cfg.training_noise(), rng)?;
    let sel = select_best(&obs, cfg)?;
    let stacked = estimate_stacked_channel(&obs)?;

    let (_, s, _) = svd_sorted(&stacked.h)?;
    let rank = numerical_rank(&s, stacked.h.nrows(), stacked.h.ncols());
    let streams = cfg.streams_for(&stacked.h.adjoint()).min(rank).min(r.tx_antennas());
    if streams == 0 {
        // Nothing to weight against; fall back to the best observed codeword.
        let phi = codebook.codewords[sel.index].clone();
        return Ok(SchemeOutcome {
            kind,
            capacity: evaluate(r, &phi, &sel.estimates[sel.index], cfg)?,
            q_used: spec.q,
            iterations: 0,
            converged: false,
            phi,
            selected: Some(sel.index),
            scores: sel.scores,
        });
    }

    let p = build_subspace_matrix(&stacked, streams)?;
    let b = build_gram_matrix(&p, stacked.tx_antennas)?;
    let k0 = init_weights(&codebook.a_matrix, &codebook.codewords[sel.index])?;
    let sol = kkt_iterate(&WeightProblem {
        b,
        a_q: codebook.a_matrix.clone(),
        k0,
        settings: cfg.optimizer,
    })?;

    let estimate = stacked.composite(&sol.phi)?;
    Ok(SchemeOutcome {
        kind,
        capacity: evaluate(r, &sol.phi, &estimate, cfg)?,
        q_used: spec.q,
        iterations: sol.iterations,
        converged: sol.converged,
        phi: sol.phi,
        selected: Some(sel.index),
        scores: sel.scores,
    })
}

/// Dispatches on `spec.kind`.
pub fn run_scheme<R: Rng + ?Sized>(
    r: &ChannelRealization,
    spec: &SchemeSpec,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    match spec.kind {
        SchemeKind::Random => run_random(r, cfg, rng),
        SchemeKind::RanC => run_ranc(r, spec.q, cfg, rng),
        SchemeKind::Dftc => run_dftc(r, spec, cfg, rng),
        SchemeKind::Wdft | SchemeKind::Ewdft => run_wdft(r, spec, cfg, rng),
    }
}
