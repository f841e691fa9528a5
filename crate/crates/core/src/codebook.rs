//! DFT and random codebooks and codeword configuration orders.
//!
//! Codeword indices are 0-based throughout: codeword `q` is built from column
//! `q` of the `(N+1)`-point DFT matrix, dropping the leading entry (which
//! multiplies the direct channel and is always `1`).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix, CVector, ONE};

/// `A[m, n] = exp(-j 2 pi m n / size)`.
pub fn dft_matrix(size: usize) -> Result<CMatrix> {
    if size == 0 {
        return Err(Error::invalid("DFT size must be positive"));
    }
    Ok(CMatrix::from_fn(size, size, |m, n| {
        // Reduce m*n modulo size first so both (m, n) and (n, m) hit the
        // same argument bit-for-bit.
        let k = (m * n) % size;
        cis(-2.0 * PI * k as f64 / size as f64)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    #[default]
    Sequential,
    EnvironmentAware,
}

/// Transmit/receive antenna pair (0-based) used for the LoS alignment metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaPair {
    pub tx: usize,
    pub rx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// `Q` unit-modulus RC vectors of length `N`.
    pub codewords: Vec<CVector>,
    /// `(N+1) x Q`; column `q` is `[1; codewords[q]]`.
    pub a_matrix: CMatrix,
    /// Source index of each codeword (DFT column for DFT codebooks).
    pub order: Vec<usize>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn ris_elements(&self) -> usize {
        self.a_matrix.nrows() - 1
    }

    fn from_columns(columns: CMatrix, order: Vec<usize>) -> Self {
        let n = columns.nrows() - 1;
        let codewords = (0..columns.ncols())
            .map(|q| columns.view((1, q), (n, 1)).column(0).into_owned())
            .collect();
        Codebook {
            codewords,
            a_matrix: columns,
            order,
        }
    }
}

pub fn sequential_order(n: usize) -> Vec<usize> {
    (0..=n).collect()
}

/// First `q` columns of the `(N+1)`-point DFT, in the given configuration order.
pub fn dft_codebook(n: usize, q: usize, order: &[usize]) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::invalid("RIS must have at least one element"));
    }
    if q == 0 || q > n + 1 {
        return Err(Error::invalid(format!("Q = {q} outside 1..={}", n + 1)));
    }
    if order.len() < q {
        return Err(Error::invalid("configuration order shorter than Q"));
    }
    let chosen = &order[..q];
    let mut seen = vec![false; n + 1];
    for &c in chosen {
        if c > n || std::mem::replace(&mut seen[c], true) {
            return Err(Error::invalid(format!("invalid or repeated codeword index {c}")));
        }
    }
    let a = dft_matrix(n + 1)?;
    let cols = CMatrix::from_fn(n + 1, q, |r, c| a[(r, chosen[c])]);
    Ok(Codebook::from_columns(cols, chosen.to_vec()))
}

/// `q` codewords with i.i.d. phases uniform on `[0, 2 pi)`.
pub fn random_codebook<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Result<Codebook> {
    if n == 0 || q == 0 {
        return Err(Error::invalid("random codebook needs N >= 1 and Q >= 1"));
    }
    let mut cols = CMatrix::from_element(n + 1, q, ONE);
    for c in 0..q {
        for r in 1..=n {
            cols[(r, c)] = random_phase(rng);
        }
    }
    Ok(Codebook::from_columns(cols, (0..q).collect()))
}

pub(crate) fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> crate::linalg::C64 {
    cis(rng.random_range(0.0..2.0 * PI))
}

/// Random RC vector with i.i.d. uniform phases.
pub fn random_phases<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| random_phase(rng))
}

/// Ranks all `N+1` DFT codewords by LoS alignment
/// `|Hd[rx,tx] + Hr[rx,:] diag(phi_q) Ht[:,tx]|^2`, best first, ties by index.
pub fn env_aware_order(
    los_d: &CMatrix,
    los_r: &CMatrix,
    los_t: &CMatrix,
    pair: AntennaPair,
) -> Result<Vec<usize>> {
    let n = los_t.nrows();
    if los_r.ncols() != n || los_d.nrows() != los_r.nrows() || los_d.ncols() != los_t.ncols() {
        return Err(Error::invalid("LoS matrix shapes are inconsistent"));
    }
    if pair.tx >= los_t.ncols() || pair.rx >= los_r.nrows() {
        return Err(Error::invalid(format!(
            "antenna pair ({}, {}) out of range",
            pair.tx, pair.rx
        )));
    }
    // Per-element cascade coefficients for the chosen antenna pair.
    let direct = los_d[(pair.rx, pair.tx)];
    let cascade: Vec<_> = (0..n)
        .map(|e| los_r[(pair.rx, e)] * los_t[(e, pair.tx)])
        .collect();

    let a = dft_matrix(n + 1)?;
    let metric: Vec<f64> = (0..=n)
        .map(|q| {
            let s = cascade
                .iter()
                .enumerate()
                .fold(direct, |acc, (e, c)| acc + c * a[(e + 1, q)]);
            s.norm_sqr()
        })
        .collect();

    let mut idx: Vec<usize> = (0..=n).collect();
    idx.sort_by(|&x, &y| metric[y].total_cmp(&metric[x]).then(x.cmp(&y)));
    Ok(idx)
}
