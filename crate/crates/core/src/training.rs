//! Uplink training: pilots, per-block reception under each codeword, and
//! estimation of the stacked direct-plus-cascaded channel.
//!
//! The stacked channel `H` is `(N+1) M_t x M_r`. Row block 0 is `H_d^H`, row
//! block `n >= 1` is the rank-1 cascade `h_t,n h_r,n^H` through element `n`,
//! so the composite channel for an RC vector `phi` is
//! `H_e^H = sum_n conj(phi~_n) block_n` with `phi~ = [1; phi]`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::geometry::ChannelRealization;
use crate::linalg::{
    cis, complex_gaussian_matrix, right_gram_inverse, right_pseudo_inverse, CMatrix, CVector, C64,
    ONE, ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Pilot length in symbols.
    pub tau: usize,
    /// Average pilot power (W).
    pub uplink_power: f64,
    /// BS noise power (W).
    pub bs_noise: f64,
}

impl PilotConfig {
    pub fn validate(&self, rx_antennas: usize) -> Result<()> {
        if self.tau < rx_antennas {
            return Err(Error::invalid(format!(
                "pilot length {} shorter than {} UE antennas",
                self.tau, rx_antennas
            )));
        }
        if !(self.uplink_power >= 0.0) || !(self.bs_noise >= 0.0) {
            return Err(Error::invalid("pilot and noise powers must be non-negative"));
        }
        Ok(())
    }
}

/// First `m_r` rows of the `tau`-point DFT, scaled so that
/// `X X^H = (tau p_u / M_r) I`.
pub fn build_pilot(m_r: usize, tau: usize, p_u: f64) -> Result<CMatrix> {
    if m_r == 0 || tau < m_r {
        return Err(Error::invalid(format!(
            "pilot needs 1 <= M_r <= tau, got M_r = {m_r}, tau = {tau}"
        )));
    }
    if !(p_u >= 0.0) {
        return Err(Error::invalid("pilot power must be non-negative"));
    }
    let amp = (p_u / m_r as f64).sqrt();
    Ok(CMatrix::from_fn(m_r, tau, |m, t| {
        cis(-2.0 * PI * ((m * t) % tau) as f64 / tau as f64) * amp
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedChannel {
    pub h: CMatrix,
    pub tx_antennas: usize,
}

impl StackedChannel {
    pub fn blocks(&self) -> usize {
        self.h.nrows() / self.tx_antennas
    }

    pub fn ris_elements(&self) -> usize {
        self.blocks() - 1
    }

    pub fn rx_antennas(&self) -> usize {
        self.h.ncols()
    }

    /// Row block `n` (`M_t x M_r`).
    pub fn block(&self, n: usize) -> CMatrix {
        self.h
            .rows(n * self.tx_antennas, self.tx_antennas)
            .into_owned()
    }

    /// `H^H (v (x) I_{M_t})` for an `(N+1)`-vector `v`; `M_r x M_t`.
    pub fn composite_embedded(&self, v: &CVector) -> Result<CMatrix> {
        if v.len() != self.blocks() {
            return Err(Error::invalid("embedded RC vector has wrong length"));
        }
        let mut out = CMatrix::zeros(self.rx_antennas(), self.tx_antennas);
        for (n, &w) in v.iter().enumerate() {
            let b = self.h.rows(n * self.tx_antennas, self.tx_antennas);
            out += b.adjoint() * w;
        }
        Ok(out)
    }

    /// Composite downlink channel `H_d + H_r diag(phi) H_t` as seen through the stack.
    pub fn composite(&self, phi: &CVector) -> Result<CMatrix> {
        self.composite_embedded(&embed(phi))
    }
}

/// `[1; phi]`.
pub fn embed(phi: &CVector) -> CVector {
    CVector::from_fn(phi.len() + 1, |i, _| if i == 0 { ONE } else { phi[i - 1] })
}

pub fn build_stacked_channel(r: &ChannelRealization) -> StackedChannel {
    let (n, mt, mr) = (r.ris_elements(), r.tx_antennas(), r.rx_antennas());
    let mut h = CMatrix::zeros((n + 1) * mt, mr);
    h.rows_mut(0, mt).copy_from(&r.h_d.adjoint());
    for e in 0..n {
        // h_t,n = conj(H_t[n, :])^T, h_r,n = H_r[:, n].
        let h_t = r.h_t.row(e).adjoint();
        let h_r = r.h_r.column(e);
        h.rows_mut((e + 1) * mt, mt).copy_from(&(h_t * h_r.adjoint()));
    }
    StackedChannel { h, tx_antennas: mt }
}

/// `Y_q = (H_d + H_r diag(phi_q) H_t)^H X + N_q`, `N_q ~ CN(0, sigma^2)` i.i.d.
pub fn uplink_receive<R: Rng + ?Sized>(
    r: &ChannelRealization,
    codeword: &CVector,
    pilot: &CMatrix,
    bs_noise: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    if codeword.len() != r.ris_elements() || pilot.nrows() != r.rx_antennas() {
        return Err(Error::invalid("codeword or pilot shape mismatch"));
    }
    let he = crate::precoding::effective_channel(r, codeword)?;
    let noise = complex_gaussian_matrix(r.tx_antennas(), pilot.ncols(), bs_noise, rng);
    Ok(he.adjoint() * pilot + noise)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingObservation {
    /// `Q M_t x tau`, blocks in configuration order.
    pub y_stack: CMatrix,
    pub per_block: Vec<CMatrix>,
    pub codebook: Codebook,
    pub pilot: CMatrix,
}

impl TrainingObservation {
    pub fn from_blocks(per_block: Vec<CMatrix>, codebook: Codebook, pilot: CMatrix) -> Result<Self> {
        if per_block.len() != codebook.len() || per_block.is_empty() {
            return Err(Error::invalid("one received block per codeword required"));
        }
        let (mt, tau) = per_block[0].shape();
        if per_block.iter().any(|y| y.shape() != (mt, tau)) || tau != pilot.ncols() {
            return Err(Error::invalid("received blocks have inconsistent shapes"));
        }
        let mut y_stack = CMatrix::zeros(per_block.len() * mt, tau);
        for (q, y) in per_block.iter().enumerate() {
            y_stack.rows_mut(q * mt, mt).copy_from(y);
        }
        Ok(Self {
            y_stack,
            per_block,
            codebook,
            pilot,
        })
    }

    pub fn tx_antennas(&self) -> usize {
        self.per_block[0].nrows()
    }
}

/// Runs `Q` training blocks, one per codeword in configuration order.
pub fn observe<R: Rng + ?Sized>(
    r: &ChannelRealization,
    codebook: &Codebook,
    pilot: &CMatrix,
    bs_noise: f64,
    rng: &mut R,
) -> Result<TrainingObservation> {
    let blocks = codebook
        .codewords
        .iter()
        .map(|w| uplink_receive(r, w, pilot, bs_noise, rng))
        .collect::<Result<Vec<_>>>()?;
    TrainingObservation::from_blocks(blocks, codebook.clone(), pilot.clone())
}

/// Minimum-norm estimate
/// `H^ = (A_Q (A_Q^H A_Q)^{-1} (x) I_{M_t}) Y X^H (X X^H)^{-1}`.
///
/// With `Q = N+1` and a DFT codebook this is the exact inverse of the
/// training map.
pub fn estimate_stacked_channel(obs: &TrainingObservation) -> Result<StackedChannel> {
    let mt = obs.tx_antennas();
    let a_q = &obs.codebook.a_matrix;
    let (n1, q) = a_q.shape();

    let z = &obs.y_stack * right_pseudo_inverse(&obs.pilot)?;
    let g = right_gram_inverse(a_q)?;
    let mr = z.ncols();

    let mut h = CMatrix::zeros(n1 * mt, mr);
    for n in 0..n1 {
        let mut block = h.rows_mut(n * mt, mt);
        for j in 0..q {
            let w: C64 = g[(n, j)];
            if w != ZERO {
                block += z.rows(j * mt, mt) * w;
            }
        }
    }
    Ok(StackedChannel { h, tx_antennas: mt })
}

/// Composite-channel estimate from a single block, `(Y_q X^H (X X^H)^{-1})^H`.
pub fn estimate_composite_per_block(y_q: &CMatrix, pilot: &CMatrix) -> Result<CMatrix> {
    if y_q.ncols() != pilot.ncols() {
        return Err(Error::invalid("block and pilot lengths differ"));
    }
    Ok((y_q * right_pseudo_inverse(pilot)?).adjoint())
}
