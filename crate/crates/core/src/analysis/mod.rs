//! Closed-form asymptotic quantities: the oracle mixing weight ω*, the
//! quadratic asymptotic risk R₀(ω), the shrinkage bounds, and the
//! Gaussian limit experiment used to check them by simulation.

mod idealized;
mod special;

pub use idealized::{simulate_hausman_gap, simulate_lemma1, HausmanGap, Lemma1Sim};
pub use special::{hypergeom_1f1, inv_noncentral_chisq_mean, ln_hypergeom_1f1};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::linalg::{check_square, quad_form, spd_inverse, trace};

/// Asymptotic description of a two-module problem for θ₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSpec {
    /// I_p(11); its inverse is the cut estimator's asymptotic variance.
    pub info_p11: DMatrix<f64>,
    /// I₁₁.₂; its inverse is the exact estimator's asymptotic variance.
    pub info_11_2: DMatrix<f64>,
    /// Drift η₁ − I₁₂I₂₂⁻¹η₂.
    pub bias_vec: DVector<f64>,
    pub curvature: DMatrix<f64>,
}

/// Derived pieces shared by [`omega_star`] and [`risk_quadratic`].
struct Parts {
    /// tr Υ I_p(11)⁻¹
    cut_risk: f64,
    /// tr Υ(I_p(11)⁻¹ − I₁₁.₂⁻¹)
    t: f64,
    /// bᵀ I₁₁.₂⁻¹ Υ I₁₁.₂⁻¹ b
    bias_term: f64,
}

impl AsymptoticSpec {
    pub fn new(
        info_p11: DMatrix<f64>,
        info_11_2: DMatrix<f64>,
        bias_vec: DVector<f64>,
        curvature: DMatrix<f64>,
    ) -> Result<Self> {
        let s = Self { info_p11, info_11_2, bias_vec, curvature };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.bias_vec.len()
    }

    /// Checks shapes and positive definiteness; warns when the cut variance
    /// does not dominate the exact variance.
    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if k == 0 {
            return invalid("asymptotic spec needs d1 >= 1");
        }
        check_square(&self.info_p11, k, "I_p(11)")?;
        check_square(&self.info_11_2, k, "I_11.2")?;
        check_square(&self.curvature, k, "curvature")?;
        let a = spd_inverse(&self.info_p11, "I_p(11)")?;
        let b = spd_inverse(&self.info_11_2, "I_11.2")?;
        let gap = crate::linalg::symmetrize(&(a - b));
        let min_eig = gap.symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 {
            log::warn!("I_p(11)^-1 - I_11.2^-1 is not PSD (min eigenvalue {min_eig:.3e})");
        }
        Ok(())
    }

    fn parts(&self) -> Result<Parts> {
        self.validate()?;
        let a = spd_inverse(&self.info_p11, "I_p(11)")?;
        let b = spd_inverse(&self.info_11_2, "I_11.2")?;
        let u = &self.curvature;
        let bb = &b * &self.bias_vec;
        Ok(Parts {
            cut_risk: trace(&(u * &a)),
            t: trace(&(u * (&a - &b))),
            bias_term: quad_form(u, &bb),
        })
    }
}

/// Risk-minimizing weight: t/(bᵀBΥBb + t) when t > 0, else 0.
pub fn omega_star(spec: &AsymptoticSpec) -> Result<f64> {
    let p = spec.parts()?;
    if p.t <= 0.0 {
        return Ok(0.0);
    }
    Ok(p.t / (p.bias_term + p.t))
}

/// R₀(ω) = tr ΥA + ω²(t + bᵀBΥBb) − 2ωt.
pub fn risk_quadratic(spec: &AsymptoticSpec, omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return invalid(format!("omega {omega} outside [0, 1]"));
    }
    let p = spec.parts()?;
    Ok(p.cut_risk + omega * omega * (p.t + p.bias_term) - 2.0 * omega * p.t)
}

/// `(ω, R₀(ω))` on an even grid of `n` points over [0, 1].
pub fn risk_curve(spec: &AsymptoticSpec, n: usize) -> Result<Vec<(f64, f64)>> {
    if n < 2 {
        return invalid("risk curve needs at least two points");
    }
    (0..n)
        .map(|i| {
            let w = i as f64 / (n - 1) as f64;
            Ok((w, risk_quadratic(spec, w)?))
        })
        .collect()
}

/// Golden-section minimizer of a unimodal function on [lo, hi].
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn check_shrinkage(d1: u32, gamma: f64, strict_upper: bool) -> Result<()> {
    if d1 <= 2 {
        return invalid(format!("d1 must exceed 2, got {d1}"));
    }
    let upper = 2.0 * (d1 as f64 - 2.0);
    let ok = gamma > 0.0 && if strict_upper { gamma < upper } else { gamma <= upper };
    if !ok {
        let rel = if strict_upper { "<" } else { "<=" };
        return invalid(format!("gamma must satisfy 0 < gamma {rel} {upper}, got {gamma}"));
    }
    Ok(())
}

/// γ{2(d₁−2)−γ}(d₁−3)! / (2·d₁!) · ₁F₁(d₁−1; d₁; λ), with factorials via log-gamma.
pub fn corollary2_risk_gap(gamma: f64, d1: u32, lambda: f64) -> Result<f64> {
    check_shrinkage(d1, gamma, true)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    let d = d1 as f64;
    let ln_fact = ln_gamma(d - 2.0) - ln_gamma(d + 1.0) - std::f64::consts::LN_2;
    let ln_f = ln_hypergeom_1f1(d - 1.0, d, lambda)?;
    Ok(gamma * (2.0 * (d - 2.0) - gamma) * (ln_fact + ln_f).exp())
}

/// Risk gap γ{2(d₁−2)−γ}·E[1/Z], Z noncentral χ² with `df` degrees of
/// freedom and Poisson parameter λ. With `df = d₁` this is the exact gap of
/// the unclamped SMP in the Gaussian limit experiment under Υ = (A − B)⁻¹.
pub fn corollary2_gap_via_moment(gamma: f64, d1: u32, lambda: f64, df: f64) -> Result<f64> {
    check_shrinkage(d1, gamma, true)?;
    Ok(gamma * (2.0 * (d1 as f64 - 2.0) - gamma) * inv_noncentral_chisq_mean(df, lambda)?)
}

/// Upper bound d₁τ² − γτ⁴{2(d₁−2)−γ}/(ηᵀη + d₁(σ²+τ²)) on the SMP risk.
pub fn lemma1_bound(d1: u32, tau2: f64, sigma2: f64, eta_norm2: f64, gamma: f64) -> Result<f64> {
    check_shrinkage(d1, gamma, false)?;
    if !(tau2 > 0.0 && sigma2 >= 0.0 && eta_norm2 >= 0.0) {
        return invalid("need tau2 > 0, sigma2 >= 0 and eta_norm2 >= 0");
    }
    let d = d1 as f64;
    Ok(d * tau2 - gamma * tau2 * tau2 * (2.0 * (d - 2.0) - gamma) / (eta_norm2 + d * (sigma2 + tau2)))
}
