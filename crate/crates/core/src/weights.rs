//! Codeword weighting: the lower-bound quadratic objective and its
//! fixed-point (KKT) ascent.
//!
//! Given the stacked channel estimate, the dominant right-singular subspace
//! of `H^H` is split into `N+1` blocks `P_n` and compressed into the
//! Hermitian Gram matrix `B[i, j] = tr(P_j^H P_i)`. The weights `k` then
//! maximize `k^H A_Q^H B A_Q k` subject to `|(A_Q k)_n| = 1`, iterating
//!
//! ```text
//! v        = B A_Q k
//! A_Q k'   = exp(j angle(v))      (least squares when Q < N+1)
//! upsilon' = |v|
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    least_squares, numerical_rank, svd_sorted, unit_phase, CMatrix, CVector, C64,
};
use crate::training::{embed, StackedChannel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Stop once `|f(k') - f(k)| <= tolerance * |f(k)|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// `P = sqrt((N+1)/M_s) V[:, ..M_s]` from `H^H = U S V^H`.
pub fn build_subspace_matrix(est: &StackedChannel, streams: usize) -> Result<CMatrix> {
    if streams == 0 {
        return Err(Error::invalid("stream count must be positive"));
    }
    let hh = est.h.adjoint();
    let (_, s, v) = svd_sorted(&hh)?;
    let rank = numerical_rank(&s, hh.nrows(), hh.ncols());
    if streams > rank {
        return Err(Error::RankDeficient {
            requested: streams,
            rank,
        });
    }
    let scale = ((est.blocks() as f64) / streams as f64).sqrt();
    Ok(v.columns(0, streams) * C64::from(scale))
}

/// `B[i, j] = tr(P_j^H P_i)` over the `M_t`-row blocks of `P`.
pub fn build_gram_matrix(p: &CMatrix, tx_antennas: usize) -> Result<CMatrix> {
    if tx_antennas == 0 || !p.nrows().is_multiple_of(tx_antennas) {
        return Err(Error::invalid("P rows are not a multiple of M_t"));
    }
    let blocks = p.nrows() / tx_antennas;
    let len = tx_antennas * p.ncols();
    // Column n holds block n flattened; B = (F^H F)^T.
    let flat = CMatrix::from_fn(len, blocks, |i, n| {
        p[(n * tx_antennas + i % tx_antennas, i / tx_antennas)]
    });
    Ok((flat.adjoint() * flat).transpose())
}

/// Least-squares weights reproducing `[1; phi_m]` from the columns of `A_Q`.
pub fn init_weights(a_q: &CMatrix, best_codeword: &CVector) -> Result<CVector> {
    if best_codeword.len() + 1 != a_q.nrows() {
        return Err(Error::invalid("codeword length does not match A_Q"));
    }
    let target = embed(best_codeword);
    Ok(least_squares(a_q, &CMatrix::from_column_slice(target.len(), 1, target.as_slice()))?
        .column(0)
        .into_owned())
}

/// `k^H A_Q^H B A_Q k` (real part; the imaginary part vanishes for Hermitian `B`).
pub fn objective(b: &CMatrix, a_q: &CMatrix, k: &CVector) -> f64 {
    let u = a_q * k;
    u.dotc(&(b * &u)).re
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightProblem {
    pub b: CMatrix,
    pub a_q: CMatrix,
    pub k0: CVector,
    pub settings: OptimizerSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub k: CVector,
    /// Lagrange multipliers `|B A_Q k|` from the final update.
    pub upsilon: Vec<f64>,
    /// Composed RC vector, unit modulus.
    pub phi: CVector,
    /// Objective at `k0` followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub k_norm_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn is_hermitian(b: &CMatrix) -> bool {
    let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
    b.is_square() && (b - b.adjoint()).iter().all(|z| z.norm() <= 1e-10 * scale)
}

fn all_finite(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Fixed-point ascent on the unit-modulus constrained quadratic.
///
/// On return `k` is rotated so that `(A_Q k)_0`, the entry multiplying the
/// direct channel, has zero phase. The objective is invariant to that rotation.
pub fn kkt_iterate(problem: &WeightProblem) -> Result<WeightSolution> {
    let WeightProblem { b, a_q, k0, settings } = problem;
    let (n1, q) = a_q.shape();
    if b.shape() != (n1, n1) || k0.len() != q {
        return Err(Error::invalid("B, A_Q and k0 shapes are inconsistent"));
    }
    if !is_hermitian(b) {
        return Err(Error::invalid("B must be Hermitian"));
    }
    if !all_finite(k0) {
        return Err(Error::Numerical("non-finite initial weights".into()));
    }
    let lsq = least_squares(a_q, &CMatrix::identity(n1, n1))?;

    let mut k = k0.clone();
    let mut u = a_q * &k;
    let mut obj = u.dotc(&(b * &u)).re;
    let mut trace = vec![obj];
    let mut norms = vec![k.norm()];
    let mut upsilon = vec![0.0; n1];
    let mut converged = false;
    let mut iterations = 0;

    for r in 1..=settings.max_iterations {
        let v = b * &u;
        upsilon = v.iter().map(|z| z.norm()).collect();
        let t = v.map(unit_phase);
        let k_next = &lsq * t;
        if !all_finite(&k_next) {
            return Err(Error::Numerical(format!("non-finite weights at iteration {r}")));
        }
        k = k_next;
        u = a_q * &k;
        let next = u.dotc(&(b * &u)).re;
        trace.push(next);
        norms.push(k.norm());
        iterations = r;
        let done = (next - obj).abs() <= settings.tolerance * obj.abs().max(f64::MIN_POSITIVE);
        obj = next;
        if done {
            converged = true;
            break;
        }
    }

    let rot = unit_phase(u[0]).conj();
    k *= rot;
    let phi = compose_rc(a_q, &k);
    Ok(WeightSolution {
        k,
        upsilon,
        phi,
        objective_trace: trace,
        k_norm_trace: norms,
        iterations,
        converged,
    })
}

/// `sum_q k_q phi_q`, projected entrywise onto the unit circle (zeros map to 1).
pub fn compose_rc(a_q: &CMatrix, k: &CVector) -> CVector {
    let n = a_q.nrows() - 1;
    let raw = a_q.rows(1, n) * k;
    raw.map(unit_phase)
}

/// `sum_q k_q phi_q` before projection.
pub fn compose_raw(a_q: &CMatrix, k: &CVector) -> CVector {
    let n = a_q.nrows() - 1;
    a_q.rows(1, n) * k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{dft_codebook, sequential_order};
    use crate::geometry::{sample_channels, ArrayGeometry, ChannelModel, LinkSet};
    use crate::linalg::{complex_gaussian_matrix, max_abs_diff, ONE, ZERO};
    use crate::rng::{substream, Purpose};
    use crate::training::build_stacked_channel;
    use nalgebra::SymmetricEigen;

    fn full_a(n: usize) -> CMatrix {
        dft_codebook(n, n + 1, &sequential_order(n)).unwrap().a_matrix
    }

    fn unit(q: usize, i: usize) -> CVector {
        CVector::from_fn(q, |r, _| if r == i { ONE } else { ZERO })
    }

    fn random_stack(seed: u64, nx: usize, ny: usize, mt: usize, mr: usize) -> StackedChannel {
        let model = ChannelModel::new(
            ArrayGeometry {
                ris_nx: nx,
                ris_ny: ny,
                bs_antennas: mt,
                ue_antennas: mr,
                ..ArrayGeometry::default()
            },
            LinkSet::default(),
        );
        build_stacked_channel(&sample_channels(&model, &mut substream(seed, 0, Purpose::Channel)).unwrap())
    }

    #[test]
    fn subspace_matrix_scaling() {
        let est = random_stack(1, 2, 3, 3, 2);
        for ms in 1..=2 {
            let p = build_subspace_matrix(&est, ms).unwrap();
            let g = p.adjoint() * &p;
            let target = CMatrix::identity(ms, ms) * C64::from(7.0 / ms as f64);
            assert!(max_abs_diff(&g, &target) < 1e-9);
        }
        assert!(matches!(
            build_subspace_matrix(&est, 3),
            Err(Error::RankDeficient { requested: 3, rank: 2 })
        ));
    }

    #[test]
    fn orthonormal_rows_give_expected_frobenius_norm() {
        // N = 1, M_t = 1, M_r = 1: H^H = [a, b] has one right singular vector.
        let est = StackedChannel {
            h: CMatrix::from_column_slice(2, 1, &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]),
            tx_antennas: 1,
        };
        let p = build_subspace_matrix(&est, 1).unwrap();
        assert!((p.norm_squared() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn subspace_matches_eigenvector_projector() {
        // Independent route: top eigenvectors of H H^H span the same subspace.
        let est = random_stack(2, 3, 3, 4, 4);
        let ms = 3;
        let p = build_subspace_matrix(&est, ms).unwrap();
        let proj = &p * p.adjoint() * C64::from(ms as f64 / est.blocks() as f64);

        let eig = SymmetricEigen::new(&est.h * est.h.adjoint());
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = CMatrix::from_fn(est.h.nrows(), ms, |r, c| eig.eigenvectors[(r, idx[c])]);
        let oracle = &top * top.adjoint();
        assert!(max_abs_diff(&proj, &oracle) < 1e-8);
    }

    #[test]
    fn gram_matrix_cases() {
        let block = CMatrix::from_column_slice(2, 1, &[C64::new(1.0, 2.0), C64::new(-0.5, 0.0)]);
        let mut p = CMatrix::zeros(6, 1);
        for n in 0..3 {
            p.rows_mut(2 * n, 2).copy_from(&block);
        }
        let b = build_gram_matrix(&p, 2).unwrap();
        let c = block.norm_squared();
        assert!(b.iter().all(|z| (z - C64::from(c)).norm() < 1e-12));

        let p = CMatrix::from_column_slice(4, 1, &[ONE, ZERO, ZERO, ONE]);
        let b = build_gram_matrix(&p, 2).unwrap();
        assert!(b[(0, 1)].norm() == 0.0 && b[(1, 0)].norm() == 0.0);
    }

    #[test]
    fn gram_matrix_is_hermitian_psd_and_matches_trace_definition() {
        let est = random_stack(3, 5, 1, 4, 4);
        let p = build_subspace_matrix(&est, 4).unwrap();
        let b = build_gram_matrix(&p, 4).unwrap();
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                let pi = p.rows(4 * i, 4);
                let pj = p.rows(4 * j, 4);
                let tr = (pj.adjoint() * pi).trace();
                assert!((b[(i, j)] - tr).norm() < 1e-12);
            }
        }
        assert!(max_abs_diff(&b, &b.adjoint()) < 1e-12);
        let min_eig = SymmetricEigen::new(b).eigenvalues.min();
        assert!(min_eig >= -1e-10);
    }

    #[test]
    fn gram_is_invariant_to_singular_vector_phases() {
        let est = random_stack(4, 2, 2, 3, 3);
        let p = build_subspace_matrix(&est, 2).unwrap();
        let mut rotated = p.clone();
        rotated.set_column(0, &(p.column(0) * crate::linalg::cis(1.1)));
        rotated.set_column(1, &(p.column(1) * crate::linalg::cis(-2.3)));
        let b1 = build_gram_matrix(&p, 3).unwrap();
        let b2 = build_gram_matrix(&rotated, 3).unwrap();
        assert!(max_abs_diff(&b1, &b2) < 1e-12);
    }

    #[test]
    fn init_recovers_selected_codeword() {
        let cb = dft_codebook(5, 4, &[3, 0, 5, 1, 2, 4]).unwrap();
        let k = init_weights(&cb.a_matrix, &cb.codewords[1]).unwrap();
        assert!((&k - unit(4, 1)).norm() < 1e-12);
    }

    #[test]
    fn init_full_basis_reconstructs_any_vector() {
        let a = full_a(4);
        let phi = crate::codebook::random_phases(4, &mut substream(1, 1, Purpose::Wdft));
        let k = init_weights(&a, &phi).unwrap();
        assert!((&a * k - embed(&phi)).norm() < 1e-12);
    }

    #[test]
    fn init_partial_basis_is_least_squares() {
        let cb = dft_codebook(6, 3, &sequential_order(6)).unwrap();
        let phi = crate::codebook::random_phases(6, &mut substream(2, 1, Purpose::Wdft));
        let k = init_weights(&cb.a_matrix, &phi).unwrap();
        // Normal-equations oracle: residual orthogonal to the columns.
        let resid = &cb.a_matrix * &k - embed(&phi);
        assert!((cb.a_matrix.adjoint() * &resid).norm() < 1e-12);
        // Perturbing k only increases the residual.
        let worse = &cb.a_matrix * (&k + unit(3, 0) * C64::new(0.01, 0.01)) - embed(&phi);
        assert!(worse.norm() > resid.norm());
    }

    #[test]
    fn identity_b_is_stationary() {
        let a = full_a(3);
        let k0 = init_weights(&a, &CVector::from_element(3, ONE)).unwrap();
        let sol = kkt_iterate(&WeightProblem {
            b: CMatrix::identity(4, 4),
            a_q: a,
            k0,
            settings: OptimizerSettings::default(),
        })
        .unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
        assert!((sol.objective_trace[0] - sol.objective_trace[1]).abs() < 1e-12);
    }

    #[test]
    fn rank_one_b_aligns_in_one_step() {
        let n = 5;
        let mut rng = substream(5, 0, Purpose::Wdft);
        let bvec = complex_gaussian_matrix(n + 1, 1, 1.0, &mut rng).column(0).into_owned();
        let b = &bvec * bvec.adjoint();
        let a = full_a(n);
        let sol = kkt_iterate(&WeightProblem {
            b,
            a_q: a.clone(),
            k0: unit(n + 1, 2),
            settings: OptimizerSettings::default(),
        })
        .unwrap();
        let l1: f64 = bvec.iter().map(|z| z.norm()).sum();
        assert!((sol.objective_trace[1] - l1 * l1).abs() < 1e-9 * l1 * l1);
        let u = &a * &sol.k;
        let g = unit_phase(u[0] / unit_phase(bvec[0]));
        for i in 0..=n {
            assert!((u[i] - unit_phase(bvec[i]) * g).norm() < 1e-9);
        }
    }

    #[test]
    fn diagonal_b_matches_grid_optimum() {
        // N = 3, B = diag(10, 1, 1, 1): the objective is constant on the
        // feasible set, so any grid point is optimal.
        let a = full_a(3);
        let b = crate::linalg::real_diag(&[10.0, 1.0, 1.0, 1.0]);
        let sol = kkt_iterate(&WeightProblem {
            b: b.clone(),
            a_q: a.clone(),
            k0: unit(4, 1),
            settings: OptimizerSettings::default(),
        })
        .unwrap();
        let best = grid_optimum(&b, 64);
        assert!(*sol.objective_trace.last().unwrap() >= 0.99 * best);
    }

    /// Exhaustive search over `levels^3` phase triples with entry 0 fixed to 1.
    fn grid_optimum(b: &CMatrix, levels: usize) -> f64 {
        let step = 2.0 * std::f64::consts::PI / levels as f64;
        let ph: Vec<C64> = (0..levels).map(|i| crate::linalg::cis(i as f64 * step)).collect();
        let mut best = f64::NEG_INFINITY;
        for &x in &ph {
            for &y in &ph {
                for &z in &ph {
                    let v = CVector::from_column_slice(&[ONE, x, y, z]);
                    best = best.max(v.dotc(&(b * &v)).re);
                }
            }
        }
        best
    }

    #[test]
    fn realistic_b_reaches_near_grid_optimum() {
        for seed in 0..5 {
            let est = random_stack(10 + seed, 3, 1, 1, 1);
            let p = build_subspace_matrix(&est, 1).unwrap();
            let b = build_gram_matrix(&p, 1).unwrap();
            let a = full_a(3);
            let sol = kkt_iterate(&WeightProblem {
                b: b.clone(),
                a_q: a,
                k0: unit(4, 0),
                settings: OptimizerSettings::default(),
            })
            .unwrap();
            let best = grid_optimum(&b, 64);
            assert!(*sol.objective_trace.last().unwrap() >= 0.99 * best, "seed {seed}");
        }
    }

    #[test]
    fn full_overhead_ascent_is_monotone_feasible_and_stationary() {
        let est = random_stack(20, 5, 2, 4, 4);
        let p = build_subspace_matrix(&est, 4).unwrap();
        let b = build_gram_matrix(&p, 4).unwrap();
        let a = full_a(10);
        let sol = kkt_iterate(&WeightProblem {
            b: b.clone(),
            a_q: a.clone(),
            k0: unit(11, 3),
            settings: OptimizerSettings {
                tolerance: 1e-13,
                max_iterations: 2000,
            },
        })
        .unwrap();
        assert!(sol.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let u = &a * &sol.k;
        assert!(u.iter().all(|z| (z.norm() - 1.0).abs() < 1e-6));
        assert!(sol.upsilon.iter().all(|&x| x >= 0.0));
        // B A k ~= diag(upsilon) A k at the fixed point.
        let lhs = &b * &u;
        let rhs = CVector::from_fn(11, |i, _| u[i] * lhs[i].norm());
        assert!((lhs - rhs).norm() < 1e-3 * b.norm());
        assert!(u[0].im.abs() < 1e-12 && u[0].re > 0.0);
    }

    #[test]
    fn global_phase_of_start_does_not_matter() {
        let est = random_stack(21, 5, 1, 2, 2);
        let p = build_subspace_matrix(&est, 2).unwrap();
        let b = build_gram_matrix(&p, 2).unwrap();
        let a = full_a(5);
        let k0 = unit(6, 2);
        let run = |k0: CVector| {
            kkt_iterate(&WeightProblem {
                b: b.clone(),
                a_q: a.clone(),
                k0,
                settings: OptimizerSettings::default(),
            })
            .unwrap()
        };
        let s1 = run(k0.clone());
        let s2 = run(k0 * crate::linalg::cis(0.77));
        let f1 = *s1.objective_trace.last().unwrap();
        let f2 = *s2.objective_trace.last().unwrap();
        assert!((f1 - f2).abs() < 1e-8 * f1.abs().max(1.0));
    }

    #[test]
    fn objective_is_real_for_hermitian_b() {
        let est = random_stack(22, 2, 2, 2, 2);
        let b = build_gram_matrix(&build_subspace_matrix(&est, 2).unwrap(), 2).unwrap();
        let a = dft_codebook(4, 3, &sequential_order(4)).unwrap().a_matrix;
        let k = complex_gaussian_matrix(3, 1, 1.0, &mut substream(1, 2, Purpose::Wdft))
            .column(0)
            .into_owned();
        let u = &a * &k;
        let full = u.dotc(&(&b * &u));
        assert!(full.im.abs() < 1e-10 * full.norm().max(1.0));
    }

    #[test]
    fn non_hermitian_b_is_rejected() {
        let mut b = CMatrix::identity(3, 3);
        b[(0, 1)] = ONE;
        let err = kkt_iterate(&WeightProblem {
            b,
            a_q: full_a(2),
            k0: unit(3, 0),
            settings: OptimizerSettings::default(),
        });
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn compose_rc_cases() {
        let cb = dft_codebook(4, 5, &sequential_order(4)).unwrap();
        let phi = compose_rc(&cb.a_matrix, &unit(5, 2));
        assert!((phi - &cb.codewords[2]).norm() < 1e-15);

        // Entry 1 cancels exactly and maps to 1.
        let a = CMatrix::from_column_slice(3, 2, &[ONE, ONE, ONE, ONE, -ONE, ONE]);
        let phi = compose_rc(&a, &CVector::from_column_slice(&[ONE, ONE]));
        assert_eq!(phi[0], ONE);
        assert!((phi[1] - ONE).norm() < 1e-15);
    }
}
