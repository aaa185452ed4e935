use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::spd_inverse;

/// Gaussian prior N(m₀, Σ₀) combined with a Gaussian likelihood for the mean
/// summarized by `obs_mean` with covariance `obs_cov_over_n`.
pub fn conjugate_normal_mean(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    obs_mean: &DVector<f64>,
    obs_cov_over_n: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = prior_mean.len();
    if obs_mean.len() != k {
        return invalid("prior and observation means differ in length");
    }
    crate::linalg::check_square(prior_cov, k, "prior covariance")?;
    crate::linalg::check_square(obs_cov_over_n, k, "observation covariance")?;
    let p0 = spd_inverse(prior_cov, "prior covariance")?;
    let p1 = spd_inverse(obs_cov_over_n, "observation covariance")?;
    let cov = spd_inverse(&crate::linalg::symmetrize(&(&p0 + &p1)), "posterior precision")?;
    let mean = &cov * (p0 * prior_mean + p1 * obs_mean);
    Ok((mean, crate::linalg::symmetrize(&cov)))
}

/// Inverse-gamma update from `n_terms` Gaussian residuals with sum of squares `sum_sq`.
pub fn conjugate_inverse_gamma(shape_prior: f64, rate_prior: f64, sum_sq: f64, n_terms: usize) -> Result<(f64, f64)> {
    if sum_sq < 0.0 || !sum_sq.is_finite() {
        return invalid(format!("sum of squares must be finite and nonnegative, got {sum_sq}"));
    }
    let shape = shape_prior + n_terms as f64 / 2.0;
    let rate = rate_prior + sum_sq / 2.0;
    if !(shape > 0.0 && rate > 0.0) {
        return invalid(format!("inverse-gamma update gives shape {shape}, rate {rate}"));
    }
    Ok((shape, rate))
}

/// One draw from InvGamma(shape, rate), i.e. rate / Gamma(shape, 1).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidInput(format!("gamma shape {shape}: {e}")))?;
    Ok(rate / rng.sample(g))
}

/// Draws from N(mean, LLᵀ) given the lower Cholesky factor `chol`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol * z
}
