//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Largest singular value of a square matrix.
///
/// Symmetric inputs go through the symmetric eigensolver (max |eigenvalue|);
/// everything else through a full SVD.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return invalid(format!("spectral_norm needs a square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid("spectral_norm: non-finite entry");
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let scale = m.amax();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if is_symmetric(m, 0.0) {
        let eig = m.clone().symmetric_eigen();
        return Ok(eig.eigenvalues.amax());
    }
    let sv = m.clone().svd(false, false).singular_values;
    Ok(sv.max())
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// (M + Mᵀ) / 2
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput(format!("{what} is not positive definite")))?;
    Ok(chol.inverse())
}

/// Lower Cholesky factor, or `None` if the matrix is not positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

/// `xᵀ A x`
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

pub(crate) fn check_square(m: &DMatrix<f64>, k: usize, what: &str) -> Result<()> {
    if m.nrows() != k || m.ncols() != k {
        return invalid(format!("{what} must be {k}x{k}, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(())
}
