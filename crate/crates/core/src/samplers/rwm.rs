use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{min_ess, ChainDiagnostics, McmcConfig, TargetDensity};
use crate::error::{Error, Result};
use crate::posterior::{DrawLabel, DrawSet};
use crate::rng::rng_from_seed;

const COV_REFRESH: usize = 50;

/// Gaussian random-walk Metropolis with Robbins–Monro scale adaptation and
/// empirical-covariance proposals. Adaptation is frozen at `cfg.adapt_until`.
///
/// `d1` splits the output columns into θ₁ and θ₂ blocks.
pub fn adaptive_rwm<F: Fn(&[f64]) -> f64>(
    target: &TargetDensity<F>,
    cfg: &McmcConfig,
    d1: usize,
    label: DrawLabel,
) -> Result<(DrawSet, ChainDiagnostics)> {
    cfg.validate()?;
    let d = target.dim();
    if cfg.init.len() != d {
        return Err(Error::InvalidInit(format!("init has length {}, target dim is {d}", cfg.init.len())));
    }
    if d1 > d || d1 == 0 {
        return Err(Error::InvalidInput(format!("theta1 width {d1} invalid for dim {d}")));
    }
    let mut x = cfg.init.clone();
    let mut lp = target.eval(&x);
    if lp == f64::NEG_INFINITY || !lp.is_finite() {
        return Err(Error::InvalidInit("log density at init is not finite".into()));
    }

    let target_accept = cfg.target_accept.unwrap_or(if d == 1 { 0.44 } else { 0.234 });
    let mut log_scale = cfg.init_scale.unwrap_or(2.38 / (d as f64).sqrt()).ln();
    let mut chol = DMatrix::<f64>::identity(d, d);
    let mut rng = rng_from_seed(cfg.seed);

    // Welford accumulators over the adaptive phase.
    let mut w_n = 0usize;
    let mut w_mean = DVector::<f64>::zeros(d);
    let mut w_m2 = DMatrix::<f64>::zeros(d, d);
    let mut n_accepted_adapt = 0usize;

    let mut out = Vec::with_capacity(cfg.n_kept() * d);
    let mut accepted_post = 0usize;
    let mut z = DVector::<f64>::zeros(d);
    let mut y = vec![0.0; d];

    for iter in 0..cfg.n_iter {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let step = &chol * &z * log_scale.exp();
        for ((yi, xi), si) in y.iter_mut().zip(&x).zip(step.iter()) {
            *yi = xi + si;
        }
        let lpy = target.eval(&y);
        let log_alpha = (lpy - lp).min(0.0);
        let u: f64 = rng.random();
        let accept = lpy > f64::NEG_INFINITY && u.ln() < log_alpha;
        if accept {
            x.copy_from_slice(&y);
            lp = lpy;
        }

        if iter < cfg.adapt_until {
            let alpha = if lpy > f64::NEG_INFINITY { log_alpha.exp() } else { 0.0 };
            log_scale += (iter as f64 + 1.0).powf(-0.6) * (alpha - target_accept);
            if accept {
                n_accepted_adapt += 1;
            }
            w_n += 1;
            let xv = DVector::from_column_slice(&x);
            let delta = &xv - &w_mean;
            w_mean += &delta / w_n as f64;
            let delta2 = &xv - &w_mean;
            w_m2 += &delta * delta2.transpose();

            if n_accepted_adapt >= 2 * d && w_n > d && (iter + 1) % COV_REFRESH == 0 {
                let cov = crate::linalg::symmetrize(&(&w_m2 / (w_n as f64 - 1.0)));
                let jitter = 1e-10 * (cov.trace() / d as f64).max(1e-300);
                let reg = cov + DMatrix::identity(d, d) * jitter;
                if let Some(l) = crate::linalg::cholesky_lower(&reg) {
                    chol = l;
                }
            }
        } else if accept {
            accepted_post += 1;
        }

        if cfg.keeps(iter) {
            out.extend_from_slice(&x);
        }
    }

    let n_post = cfg.n_iter - cfg.adapt_until;
    let accept_rate = accepted_post as f64 / n_post as f64;
    let mut warnings = Vec::new();
    if accepted_post == 0 {
        let msg = format!("degenerate chain: no proposal accepted in {n_post} post-adaptation iterations");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let ess_min = min_ess(&out, d);
    let draws = DrawSet::from_rows(out, d1, d - d1, label)?;
    Ok((
        draws,
        ChainDiagnostics { accept_rate, ess_min, final_step_scale: log_scale.exp(), warnings },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn std_normal(x: &[f64]) -> f64 {
        -0.5 * x[0] * x[0]
    }

    #[test]
    fn standard_normal_moments() {
        let t = TargetDensity::new(1, std_normal);
        let cfg = McmcConfig::new(55_000, 5_000, 1, 17, vec![0.0]);
        let (d, diag) = adaptive_rwm(&t, &cfg, 1, DrawLabel::Exact).unwrap();
        assert_eq!(d.n_rows(), 50_000);
        let xs = d.column(0);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (1.0 / diag.ess_min).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        assert!((diag.accept_rate - 0.44).abs() < 0.08, "accept {}", diag.accept_rate);
    }

    #[test]
    fn support_is_preserved() {
        let t = TargetDensity::new(1, |x: &[f64]| if (0.0..=1.0).contains(&x[0]) { 0.0 } else { f64::NEG_INFINITY });
        let cfg = McmcConfig::new(5_000, 1_000, 1, 5, vec![0.5]);
        let (d, _) = adaptive_rwm(&t, &cfg, 1, DrawLabel::Exact).unwrap();
        assert!(d.column(0).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_draws() {
        let t = TargetDensity::new(3, |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let cfg = McmcConfig::new(3_000, 1_000, 2, 99, vec![0.1, 0.2, 0.3]);
        let a = adaptive_rwm(&t, &cfg, 2, DrawLabel::Exact).unwrap();
        let b = adaptive_rwm(&t, &cfg, 2, DrawLabel::Exact).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn init_outside_support_is_rejected() {
        let t = TargetDensity::new(1, |x: &[f64]| if x[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY });
        let cfg = McmcConfig::new(100, 10, 1, 0, vec![-1.0]);
        assert!(matches!(adaptive_rwm(&t, &cfg, 1, DrawLabel::Exact), Err(Error::InvalidInit(_))));
    }

    #[test]
    fn stuck_chain_reports_warning() {
        // Point mass: every proposal leaves the support.
        let t = TargetDensity::new(1, |x: &[f64]| if x[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY });
        let cfg = McmcConfig::new(200, 100, 1, 0, vec![0.0]);
        let (_, diag) = adaptive_rwm(&t, &cfg, 1, DrawLabel::Exact).unwrap();
        assert_eq!(diag.accept_rate, 0.0);
        assert_eq!(diag.warnings.len(), 1);
    }

    #[test]
    fn correlated_gaussian_adapts_covariance() {
        // Covariance [[1, 0.9], [0.9, 1]].
        let t = TargetDensity::new(2, |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            -0.5 * (a * a - 1.8 * a * b + b * b) / 0.19
        });
        let cfg = McmcConfig::new(60_000, 10_000, 1, 4, vec![0.0, 0.0]);
        let (d, diag) = adaptive_rwm(&t, &cfg, 1, DrawLabel::Exact).unwrap();
        let (a, b) = (d.column(0), d.column(1));
        let n = a.len() as f64;
        let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
        assert!((cov - 0.9).abs() < 0.1, "cov {cov}");
        assert!(diag.accept_rate > 0.15 && diag.accept_rate < 0.35, "accept {}", diag.accept_rate);
    }

    /// Fixed-kernel chain on a two-component mixture, thinned to near
    /// independence, checked against quadrature bin probabilities.
    #[test]
    fn frozen_kernel_passes_chi_square_gof() {
        let logp = |x: f64| {
            let a = 0.3 * (-0.5 * ((x + 1.0) / 0.5).powi(2)).exp() / 0.5;
            let b = 0.7 * (-0.5 * (x - 1.5).powi(2)).exp();
            (a + b).ln()
        };
        let t = TargetDensity::new(1, |x: &[f64]| logp(x[0]));
        let n_keep = 4_000;
        let thin = 25;
        let mut cfg = McmcConfig::new(1_000 + n_keep * thin, 1_000, thin, 2024, vec![1.0]);
        cfg.adapt_until = 0;
        cfg.init_scale = Some(2.0);
        let (d, _) = adaptive_rwm(&t, &cfg, 1, DrawLabel::Exact).unwrap();

        // Trapezoid CDF on a fine grid, then 20 equal-width bins on [-3, 5].
        let (lo, hi, m) = (-6.0, 8.0, 140_000);
        let h = (hi - lo) / m as f64;
        let dens: Vec<f64> = (0..=m).map(|i| logp(lo + i as f64 * h).exp()).collect();
        let mut cdf = vec![0.0; m + 1];
        for i in 1..=m {
            cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
        }
        let total = cdf[m];
        let cdf_at = |x: f64| cdf[(((x - lo) / h).round() as usize).min(m)] / total;
        let edges: Vec<f64> = (0..=20).map(|k| -3.0 + 0.4 * k as f64).collect();
        let mut probs: Vec<f64> = edges.windows(2).map(|w| cdf_at(w[1]) - cdf_at(w[0])).collect();
        probs[0] += cdf_at(-3.0);
        probs[19] += 1.0 - cdf_at(5.0);

        let mut counts = [0usize; 20];
        for v in d.column(0) {
            let k = (((v + 3.0) / 0.4).floor().max(0.0) as usize).min(19);
            counts[k] += 1;
        }
        let n = d.n_rows() as f64;
        let stat: f64 = counts.iter().zip(&probs).map(|(&c, &p)| (c as f64 - n * p).powi(2) / (n * p)).sum();
        let crit = ChiSquared::new(19.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }
}
