//! Complex dense linear algebra helpers shared by the simulation modules.
//!
//! Everything is `f64` complex on top of `nalgebra`'s dynamically sized
//! matrices. Only the handful of operations the pipeline needs live here:
//! sorted thin SVD, Gram-based left pseudo-inverse, unit-phase projection and
//! complex Gaussian draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Singular values below `RANK_RTOL * max(rows, cols) * s_max` are treated as zero.
pub const RANK_RTOL: f64 = 1e-12;

/// `e^{j theta}`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

/// `z / |z|`, with the phase of an exact zero defined as 0 (maps to `1+0j`).
#[inline]
pub fn unit_phase(z: C64) -> C64 {
    let m = z.norm();
    if m == 0.0 {
        ONE
    } else {
        z / m
    }
}

/// Thin SVD `m = U diag(s) V^H` with singular values sorted in descending order.
///
/// Returns `(U, s, V)` where `V` holds the right singular vectors as columns.
pub fn svd_sorted(m: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite entry in SVD input".into()));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V^H".into()))?;
    let s = svd.singular_values;

    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let v = v_t.adjoint();
    let u_sorted = CMatrix::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    let v_sorted = CMatrix::from_fn(v.nrows(), idx.len(), |r, c| v[(r, idx[c])]);
    let s_sorted = idx.iter().map(|&i| s[i]).collect();
    Ok((u_sorted, s_sorted, v_sorted))
}

/// Number of singular values above the relative rank threshold.
pub fn numerical_rank(singular_values: &[f64], rows: usize, cols: usize) -> usize {
    let s_max = singular_values.iter().cloned().fold(0.0, f64::max);
    if s_max == 0.0 {
        return 0;
    }
    let tol = RANK_RTOL * rows.max(cols) as f64 * s_max;
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// Cholesky factor of a Hermitian positive-definite Gram matrix, with a
/// rank check based on the ratio of the smallest to largest pivot.
fn gram_cholesky(gram: CMatrix, what: &str) -> Result<Cholesky<C64, Dyn>> {
    let scale = gram.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::NumericalRank(format!("{what} is zero or non-finite")));
    }
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::NumericalRank(format!("{what} is not positive definite")))?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)].re).fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot <= 1e-12 * scale {
        return Err(Error::NumericalRank(format!("{what} is ill-conditioned")));
    }
    Ok(chol)
}

/// Solves `(A^H A) K = A^H T` for `K` (least squares against the columns of `A`).
pub fn least_squares(a: &CMatrix, target: &CMatrix) -> Result<CMatrix> {
    let gram = a.adjoint() * a;
    let chol = gram_cholesky(gram, "A^H A")?;
    Ok(chol.solve(&(a.adjoint() * target)))
}

/// `A (A^H A)^{-1}`, the right factor of the minimum-norm solution.
pub fn right_gram_inverse(a: &CMatrix) -> Result<CMatrix> {
    let gram = a.adjoint() * a;
    let chol = gram_cholesky(gram, "A^H A")?;
    // (A (G^{-1}))^H = G^{-1} A^H, G Hermitian.
    Ok(chol.solve(&a.adjoint()).adjoint())
}

/// `X^H (X X^H)^{-1}` for a wide pilot matrix `X`.
pub fn right_pseudo_inverse(x: &CMatrix) -> Result<CMatrix> {
    let gram = x * x.adjoint();
    let chol = gram_cholesky(gram, "X X^H")?;
    Ok(chol.solve(x).adjoint())
}

/// One circularly-symmetric complex Gaussian sample with total variance `variance`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Matrix of i.i.d. `CN(0, variance)` entries, drawn in column-major order.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, variance))
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Scalar helper for building real-valued diagonal matrices.
pub fn real_diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = complex_gaussian_matrix(4, 7, 1.0, &mut rng);
        let (u, s, v) = svd_sorted(&m).unwrap();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let back = &u * real_diag(&s) * v.adjoint();
        assert!(max_abs_diff(&back, &m) < 1e-12);
    }

    #[test]
    fn unit_phase_of_zero_is_one() {
        assert_eq!(unit_phase(ZERO), ONE);
        let z = unit_phase(C64::new(0.0, -3.0));
        assert!((z - C64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn least_squares_rejects_rank_deficient_columns() {
        let col = CMatrix::from_element(3, 1, ONE);
        let a = CMatrix::from_fn(3, 2, |r, _| col[(r, 0)]);
        assert!(matches!(
            least_squares(&a, &col),
            Err(Error::NumericalRank(_))
        ));
    }

    #[test]
    fn right_pseudo_inverse_is_right_inverse() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = complex_gaussian_matrix(3, 6, 1.0, &mut rng);
        let pinv = right_pseudo_inverse(&x).unwrap();
        let id = &x * &pinv;
        assert!(max_abs_diff(&id, &CMatrix::identity(3, 3)) < 1e-12);
    }
}
