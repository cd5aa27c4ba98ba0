//! Small dense helpers shared by the filters.
//!
//! Every inverse in the filters is realised as a Cholesky solve so that a
//! violated positive-definiteness constraint surfaces as an error instead of
//! a silently wrong gain.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, unsorted.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    if m.is_empty() {
        return nalgebra::DVector::zeros(0);
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

/// Largest eigenvalue of the symmetric part of `m`; 0 for an empty matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetric_eigenvalues(m)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `m`; 0 for an empty matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetric_eigenvalues(m)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest diagonal entry; 0 for an empty matrix.
pub fn d_max(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().copied().fold(0.0_f64, f64::max)
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    constraint: &'static str,
) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim(constraint, a.nrows(), b.nrows()));
    }
    let chol = Cholesky::new(symmetrize(a)).ok_or(Error::NotPositiveDefinite { constraint })?;
    Ok(chol.solve(b))
}

/// Lower Cholesky factor of `cov`. On failure a ridge of
/// `1e-12 · trace / n` is added once before giving up.
pub fn cholesky_with_jitter(cov: &DMatrix<f64>, constraint: &'static str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(cov);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(chol.l());
    }
    let n = sym.nrows().max(1) as f64;
    let ridge = 1e-12 * sym.trace().abs().max(f64::MIN_POSITIVE) / n;
    let jittered = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * ridge;
    Cholesky::new(jittered)
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { constraint })
}

/// A square root `s` with `s sᵀ = m` for symmetric PSD `m`, tolerating
/// singular matrices (e.g. `m = 0`). Negative eigenvalues within `tol` of zero
/// are clamped; anything more negative is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, constraint: &'static str) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale);
    let mut out = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -tol {
            return Err(Error::NotPositiveDefinite { constraint });
        }
        let s = libm::sqrt(lam.max(0.0));
        out.column_mut(j).scale_mut(s);
    }
    Ok(out)
}

/// True when every eigenvalue of the symmetric part is `>= -tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    lambda_min(m) >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use nalgebra::dmatrix;

    #[test]
    fn extremal_eigenvalues() {
        let m = dmatrix![2.0, 1.0; 1.0, 2.0];
        approx::assert_relative_eq!(lambda_max(&m), 3.0, epsilon = 1e-12);
        approx::assert_relative_eq!(lambda_min(&m), 1.0, epsilon = 1e-12);
        assert_eq!(lambda_max(&DMatrix::zeros(0, 0)), 0.0);
    }

    #[test]
    fn spd_solve_rejects_indefinite() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let err = spd_solve(&a, &DMatrix::identity(2, 2), "test").unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn psd_sqrt_of_zero_is_zero() {
        let s = psd_sqrt(&DMatrix::zeros(2, 2), "q").unwrap();
        assert_eq!(s, DMatrix::zeros(2, 2));
        let m = dmatrix![4.0, 2.0; 2.0, 3.0];
        let s = psd_sqrt(&m, "q").unwrap();
        approx::assert_relative_eq!(&s * s.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let m = dmatrix![1.0, 1.0; 1.0, 1.0];
        let l = cholesky_with_jitter(&m, "cov").unwrap();
        approx::assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-6);
    }
}
