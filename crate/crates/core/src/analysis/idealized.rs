//! Direct simulation of the Gaussian limit experiment.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::lemma1_bound;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_lower, quad_form, spd_inverse, symmetrize};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Sim {
    pub d1: u32,
    pub tau2: f64,
    pub sigma2: f64,
    pub eta_norm2: f64,
    pub gamma: f64,
    pub n_draws: usize,
    pub cut_risk: f64,
    pub cut_se: f64,
    pub smp_risk: f64,
    pub smp_se: f64,
    pub bound: f64,
    pub mean_omega: f64,
}

fn mean_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Cut error ~ N(0, τ²I), exact error ~ N(η, σ²I), independent; the SMP
/// moves the cut estimate toward the exact one by ω = min{1, γ/‖Δ‖²}.
pub fn simulate_lemma1(
    d1: u32,
    tau2: f64,
    sigma2: f64,
    eta: &[f64],
    gamma: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Lemma1Sim> {
    if eta.len() != d1 as usize {
        return invalid(format!("eta has length {}, expected {d1}", eta.len()));
    }
    if n_draws < 2 {
        return Err(Error::InsufficientDraws("need at least two draws".into()));
    }
    let eta_norm2: f64 = eta.iter().map(|v| v * v).sum();
    let bound = lemma1_bound(d1, tau2, sigma2, eta_norm2, gamma)?;
    let (tau, sigma) = (tau2.sqrt(), sigma2.sqrt());
    let mut rng = rng_from_seed(seed);
    let d = d1 as usize;
    let (mut xc, mut xe) = (vec![0.0; d], vec![0.0; d]);
    let (mut sc, mut sc2, mut ss, mut ss2, mut sw) = (0.0, 0.0, 0.0, 0.0, 0.0);

    for _ in 0..n_draws {
        let mut gap = 0.0;
        for j in 0..d {
            xc[j] = tau * rng.sample::<f64, _>(StandardNormal);
            xe[j] = eta[j] + sigma * rng.sample::<f64, _>(StandardNormal);
            gap += (xc[j] - xe[j]).powi(2);
        }
        let omega = if gap > 0.0 { (gamma / gap).min(1.0) } else { 1.0 };
        let (mut lc, mut ls) = (0.0, 0.0);
        for j in 0..d {
            lc += xc[j] * xc[j];
            ls += (xc[j] - omega * (xc[j] - xe[j])).powi(2);
        }
        sc += lc;
        sc2 += lc * lc;
        ss += ls;
        ss2 += ls * ls;
        sw += omega;
    }
    let (cut_risk, cut_se) = mean_se(sc, sc2, n_draws);
    let (smp_risk, smp_se) = mean_se(ss, ss2, n_draws);
    Ok(Lemma1Sim {
        d1,
        tau2,
        sigma2,
        eta_norm2,
        gamma,
        n_draws,
        cut_risk,
        cut_se,
        smp_risk,
        smp_se,
        bound,
        mean_omega: sw / n_draws as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HausmanGap {
    /// Monte Carlo mean of cut loss minus SMP loss.
    pub gap: f64,
    pub se: f64,
    /// ½ μᵀ(A − B)⁻¹μ
    pub lambda: f64,
    pub n_draws: usize,
}

/// Limit experiment with efficient exact estimator: exact error E ~ N(μ, B),
/// difference D = cut − exact ~ N(−μ, A − B) independent of E, cut error
/// E + D ~ N(0, A). Loss uses Υ = (A − B)⁻¹ and the unclamped weight
/// ω = γ/(DᵀΥD).
pub fn simulate_hausman_gap(
    a_var: &DMatrix<f64>,
    b_var: &DMatrix<f64>,
    mu: &DVector<f64>,
    gamma: f64,
    n_draws: usize,
    seed: u64,
) -> Result<HausmanGap> {
    let k = mu.len();
    crate::linalg::check_square(a_var, k, "cut variance")?;
    crate::linalg::check_square(b_var, k, "exact variance")?;
    if n_draws < 2 {
        return Err(Error::InsufficientDraws("need at least two draws".into()));
    }
    let diff = symmetrize(&(a_var - b_var));
    let ups = spd_inverse(&diff, "A - B")?;
    let lb = cholesky_lower(b_var).ok_or_else(|| Error::InvalidInput("B is not positive definite".into()))?;
    let ld = cholesky_lower(&diff).ok_or_else(|| Error::InvalidInput("A - B is not positive definite".into()))?;
    let lambda = 0.5 * quad_form(&ups, mu);

    let mut rng = rng_from_seed(seed);
    let mut z = DVector::zeros(k);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_draws {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let e = mu + &lb * &z;
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let d = &ld * &z - mu;
        let x = &e + &d;
        let q = quad_form(&ups, &d);
        let omega = gamma / q;
        let smp = &x - &d * omega;
        let g = quad_form(&ups, &x) - quad_form(&ups, &smp);
        s += g;
        s2 += g * g;
    }
    let (gap, se) = mean_se(s, s2, n_draws);
    Ok(HausmanGap { gap, se, lambda, n_draws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::corollary2_gap_via_moment;

    #[test]
    fn lemma1_simulation_respects_bound() {
        let r = simulate_lemma1(5, 1.0, 0.5, &[0.5, 0.0, 0.0, 0.0, 0.0], 3.0, 200_000, 9).unwrap();
        assert!(r.smp_risk <= r.bound + 3.0 * r.smp_se, "{r:?}");
        assert!((r.cut_risk - 5.0).abs() < 4.0 * r.cut_se);
    }

    #[test]
    fn hausman_gap_matches_moment_form_with_d1_df() {
        let k = 5;
        let b = DMatrix::identity(k, k) * 0.5;
        let a = DMatrix::identity(k, k) * 1.5;
        let mu = DVector::from_vec(vec![1.0, -0.5, 0.0, 0.3, 0.0]);
        let gamma = 3.0;
        let r = simulate_hausman_gap(&a, &b, &mu, gamma, 400_000, 21).unwrap();
        let want = corollary2_gap_via_moment(gamma, k as u32, r.lambda, k as f64).unwrap();
        assert!((r.gap - want).abs() < 3.0 * r.se, "mc {} ± {}, closed form {want}", r.gap, r.se);
    }
}
