//! Downlink effective channel, SVD precoding with water-filling, capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ChannelRealization;
use crate::linalg::{real_diag, svd_sorted, CMatrix, CVector, C64};

/// `H_e = H_d + H_r diag(phi) H_t`.
///
/// Non-unit-modulus entries are accepted (diagnostic use) and logged.
pub fn effective_channel(r: &ChannelRealization, phi: &CVector) -> Result<CMatrix> {
    if phi.len() != r.ris_elements() {
        return Err(Error::invalid(format!(
            "RC vector has {} entries, RIS has {}",
            phi.len(),
            r.ris_elements()
        )));
    }
    if phi.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
        log::warn!("RC vector is not unit modulus");
    }
    let mut scaled = r.h_t.clone();
    for (mut row, &p) in scaled.row_iter_mut().zip(phi.iter()) {
        row *= p;
    }
    Ok(&r.h_d + &r.h_r * scaled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterFilling {
    pub powers: Vec<f64>,
    /// `1 / eta`.
    pub water_level: f64,
    pub active: usize,
}

/// Capacity-optimal power split over parallel channels with gains `s_i^2 / noise`.
///
/// Active sets are tried as prefixes of the (descending) singular values; the
/// largest prefix whose weakest member still sits under the water level wins.
pub fn waterfill(singular_values: &[f64], total_power: f64, noise: f64) -> Result<WaterFilling> {
    if !(total_power > 0.0) || !(noise > 0.0) {
        return Err(Error::invalid("power and noise must be positive"));
    }
    if singular_values.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("singular values must be finite and non-negative"));
    }
    if singular_values.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("singular values must be sorted in descending order"));
    }
    let floors: Vec<f64> = singular_values
        .iter()
        .take_while(|&&s| s > 0.0)
        .map(|&s| noise / (s * s))
        .collect();
    if floors.is_empty() {
        return Err(Error::NoChannel);
    }

    let mut active = 1;
    let mut level = total_power + floors[0];
    let mut floor_sum = floors[0];
    for (k, &f) in floors.iter().enumerate().skip(1) {
        let candidate = (total_power + floor_sum + f) / (k + 1) as f64;
        if candidate > f {
            active = k + 1;
            floor_sum += f;
            level = candidate;
        } else {
            break;
        }
    }

    let mut powers: Vec<f64> = (0..singular_values.len())
        .map(|i| if i < active { (level - floors[i]).max(0.0) } else { 0.0 })
        .collect();
    // Absorb rounding so the budget is met exactly on the strongest stream.
    let drift = total_power - powers.iter().sum::<f64>();
    powers[0] += drift;
    Ok(WaterFilling {
        powers,
        water_level: level,
        active,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    /// `M_t x M_s`.
    pub w: CMatrix,
    pub powers: Vec<f64>,
    /// Water-filling threshold `eta` (the water level is `1 / eta`).
    pub eta: f64,
    pub active_streams: usize,
}

/// `W = V~ diag(p)^(1/2)` from the first `streams` right singular vectors.
///
/// A channel without any non-zero singular value yields `W = 0`.
pub fn svd_precoder(
    h_e: &CMatrix,
    streams: usize,
    total_power: f64,
    noise: f64,
) -> Result<PrecoderSolution> {
    let (mr, mt) = h_e.shape();
    if streams == 0 || streams > mr.min(mt) {
        return Err(Error::invalid(format!(
            "stream count {streams} outside 1..={}",
            mr.min(mt)
        )));
    }
    let (_, s, v) = svd_sorted(h_e)?;
    let wf = match waterfill(&s[..streams], total_power, noise) {
        Ok(wf) => wf,
        Err(Error::NoChannel) => {
            return Ok(PrecoderSolution {
                w: CMatrix::zeros(mt, streams),
                powers: vec![0.0; streams],
                eta: f64::INFINITY,
                active_streams: 0,
            })
        }
        Err(e) => return Err(e),
    };
    let amps: Vec<f64> = wf.powers.iter().map(|p| p.sqrt()).collect();
    let w = v.columns(0, streams) * real_diag(&amps);
    Ok(PrecoderSolution {
        w,
        powers: wf.powers,
        eta: 1.0 / wf.water_level,
        active_streams: wf.active,
    })
}

/// `log2 det(I + H W W^H H^H / noise)`, via the singular values of `H W`.
pub fn capacity(h_e: &CMatrix, w: &CMatrix, noise: f64) -> Result<f64> {
    if h_e.ncols() != w.nrows() {
        return Err(Error::invalid("channel and precoder shapes differ"));
    }
    if !(noise > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let hw = h_e * w;
    if hw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite channel or precoder".into()));
    }
    if hw.iter().all(|z| *z == C64::from(0.0)) {
        return Ok(0.0);
    }
    let (_, s, _) = svd_sorted(&hw)?;
    Ok(s.iter().map(|x| (x * x / noise).ln_1p()).sum::<f64>() / std::f64::consts::LN_2)
}

/// One scheme's downlink result with enough provenance to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRecord {
    pub scheme: String,
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub trial: u64,
    #[serde(rename = "capacity_bps_hz")]
    pub capacity: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(rename = "q")]
    pub q_used: usize,
    #[serde(rename = "n")]
    pub n_elements: usize,
    pub p_d_dbm: f64,
    pub p_u_dbm: f64,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian_matrix, max_abs_diff, C64, ONE};
    use crate::rng::{substream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    fn scalar(z: f64) -> CMatrix {
        CMatrix::from_element(1, 1, C64::from(z))
    }

    #[test]
    fn scalar_effective_channel() {
        let r = ChannelRealization {
            h_t: scalar(2.0),
            h_r: scalar(3.0),
            h_d: scalar(1.0),
            los_t: scalar(0.0),
            los_r: scalar(0.0),
            los_d: scalar(0.0),
        };
        let one = CVector::from_element(1, ONE);
        assert_eq!(effective_channel(&r, &one).unwrap()[(0, 0)], C64::from(7.0));
        assert_eq!(effective_channel(&r, &-one).unwrap()[(0, 0)], C64::from(-5.0));
        assert!(effective_channel(&r, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn waterfill_examples() {
        let wf = waterfill(&[1.0, 1.0], 2.0, 1.0).unwrap();
        assert!((wf.powers[0] - 1.0).abs() < 1e-12 && (wf.powers[1] - 1.0).abs() < 1e-12);

        let wf = waterfill(&[10.0, 0.01], 1.0, 1.0).unwrap();
        assert_eq!(wf.active, 1);
        assert!((wf.powers[0] - 1.0).abs() < 1e-12);
        assert_eq!(wf.powers[1], 0.0);
        assert!((wf.water_level - 1.01).abs() < 1e-12);

        let wf = waterfill(&[0.3], 5.0, 2.0).unwrap();
        assert_eq!(wf.powers, vec![5.0]);

        assert!(matches!(waterfill(&[0.0, 0.0], 1.0, 1.0), Err(Error::NoChannel)));
        assert!(waterfill(&[1.0, 2.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn identity_channel_precoder() {
        let h = CMatrix::identity(2, 2);
        let sol = svd_precoder(&h, 2, 2.0, 1.0).unwrap();
        assert!(max_abs_diff(&(&sol.w * sol.w.adjoint()), &CMatrix::identity(2, 2)) < 1e-12);
        assert!((capacity(&h, &sol.w, 1.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_channel_shuts_second_stream() {
        let u = CMatrix::from_column_slice(2, 1, &[ONE, C64::new(0.0, 1.0)]);
        let v = CMatrix::from_column_slice(2, 1, &[C64::new(0.5, 0.0), C64::new(0.2, -0.1)]);
        let h = u * v.adjoint();
        let sol = svd_precoder(&h, 2, 1.0, 1e-2).unwrap();
        assert_eq!(sol.powers[1], 0.0);
        assert_eq!(sol.active_streams, 1);
        assert!((sol.w.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_channel_gives_zero_precoder_and_capacity() {
        let h = CMatrix::zeros(3, 3);
        let sol = svd_precoder(&h, 2, 1.0, 1.0).unwrap();
        assert_eq!(sol.active_streams, 0);
        assert_eq!(capacity(&h, &sol.w, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn capacity_basics() {
        let h = scalar(0.7);
        assert_eq!(capacity(&h, &CMatrix::zeros(1, 1), 1.0).unwrap(), 0.0);
        let c = capacity(&h, &scalar(3f64.sqrt()), 0.5).unwrap();
        assert!((c - (1.0 + 3.0 * 0.49 / 0.5f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn capacity_equals_diagonalized_sum() {
        let mut rng = substream(1, 0, Purpose::Random);
        for _ in 0..20 {
            let h = complex_gaussian_matrix(4, 4, 1.0, &mut rng);
            let sol = svd_precoder(&h, 4, 3.0, 0.2).unwrap();
            let (_, s, _) = svd_sorted(&h).unwrap();
            let expected: f64 = sol
                .powers
                .iter()
                .zip(&s)
                .map(|(p, l)| (1.0 + p * l * l / 0.2).log2())
                .sum();
            assert!((capacity(&h, &sol.w, 0.2).unwrap() - expected).abs() < 1e-9);
            let budget: f64 = sol.powers.iter().sum();
            assert!((budget - 3.0).abs() < 1e-9);
            assert!(sol.w.norm_squared() <= 3.0 + 1e-9);
        }
    }

    #[test]
    fn capacity_matches_direct_determinant() {
        let mut rng = substream(2, 0, Purpose::Random);
        for _ in 0..20 {
            let h = complex_gaussian_matrix(3, 4, 1.0, &mut rng);
            let w = complex_gaussian_matrix(4, 2, 0.5, &mut rng);
            let noise = 0.3;
            let m = CMatrix::identity(3, 3) + &h * &w * w.adjoint() * h.adjoint() / C64::from(noise);
            let direct = m.determinant().re.log2();
            assert!((capacity(&h, &w, noise).unwrap() - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn capacity_grows_with_power() {
        let mut rng = substream(3, 0, Purpose::Random);
        let h = complex_gaussian_matrix(4, 4, 1.0, &mut rng);
        let mut last = 0.0;
        for p in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let sol = svd_precoder(&h, 4, p, 1.0).unwrap();
            let c = capacity(&h, &sol.w, 1.0).unwrap();
            assert!(c >= last);
            last = c;
        }
    }

    proptest! {
        #[test]
        fn capacity_is_unitary_invariant(seed in 0u64..1000, theta in 0.0f64..6.0) {
            let mut rng = substream(seed, 0, Purpose::Random);
            let h = complex_gaussian_matrix(4, 4, 1.0, &mut rng);
            let w = complex_gaussian_matrix(4, 2, 1.0, &mut rng);
            let (c, s) = (theta.cos(), theta.sin());
            let u = CMatrix::from_row_slice(2, 2, &[
                C64::from(c), C64::new(0.0, s),
                C64::new(0.0, s), C64::from(c),
            ]);
            let a = capacity(&h, &w, 0.7).unwrap();
            let b = capacity(&h, &(&w * u), 0.7).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn waterfill_kkt_conditions(seed in 0u64..1000) {
            let mut rng = substream(seed, 1, Purpose::Random);
            let mut s: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
            s.sort_by(|a, b| b.total_cmp(a));
            let p = rng.random_range(0.01..10.0);
            let noise = rng.random_range(0.01..2.0);
            let wf = waterfill(&s, p, noise).unwrap();
            prop_assert!((wf.powers.iter().sum::<f64>() - p).abs() < 1e-9);
            for (pi, si) in wf.powers.iter().zip(&s) {
                prop_assert!(*pi >= 0.0);
                let floor = if *si > 0.0 { noise / (si * si) } else { f64::INFINITY };
                if *pi > 0.0 {
                    prop_assert!((wf.water_level - floor - pi).abs() < 1e-9 * wf.water_level.max(1.0));
                } else {
                    prop_assert!(wf.water_level <= floor + 1e-12);
                }
            }
        }
    }
}
