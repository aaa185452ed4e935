//! MCMC and resampling machinery shared by the models.
//!
//! All samplers are pure functions of their inputs and seed.

mod conjugate;
mod gibbs;
mod rwm;
mod sir;

pub use conjugate::{
    conjugate_inverse_gamma, conjugate_normal_mean, sample_inverse_gamma, sample_mvn,
};
pub use gibbs::{gibbs_compose, GibbsBlock};
pub use rwm::adaptive_rwm;
pub use sir::sir_resample;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Unnormalized log density. Returns `-inf` outside the support.
pub struct TargetDensity<F> {
    log_density: F,
    dim: usize,
}

impl<F: Fn(&[f64]) -> f64> TargetDensity<F> {
    pub fn new(dim: usize, log_density: F) -> Self {
        Self { log_density, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// NaN is mapped to `-inf`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = (self.log_density)(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: Vec<f64>,
    /// `None` picks 0.44 in one dimension and 0.234 otherwise.
    pub target_accept: Option<f64>,
    /// Adaptation runs for iterations `0..adapt_until`; must not exceed `burn_in`.
    pub adapt_until: usize,
    /// Initial random-walk scale; `None` means 2.38/√dim.
    pub init_scale: Option<f64>,
}

impl McmcConfig {
    /// Adapts through the whole burn-in.
    pub fn new(n_iter: usize, burn_in: usize, thin: usize, seed: u64, init: Vec<f64>) -> Self {
        Self {
            n_iter,
            burn_in,
            thin,
            seed,
            init,
            target_accept: None,
            adapt_until: burn_in,
            init_scale: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Vec<f64>) -> Self {
        self.init = init;
        self
    }

    /// Number of retained draws.
    pub fn n_kept(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub(crate) fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter + 1 - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return invalid("thin must be at least 1");
        }
        if self.burn_in >= self.n_iter {
            return invalid(format!("burn_in {} must be below n_iter {}", self.burn_in, self.n_iter));
        }
        if self.adapt_until > self.burn_in {
            return invalid("adaptation must stop by the end of burn-in");
        }
        if let Some(t) = self.target_accept {
            if !(t > 0.0 && t < 1.0) {
                return invalid("target_accept must lie in (0, 1)");
            }
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return invalid("init_scale must be positive");
            }
        }
        if self.init.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInit("initial state has non-finite entries".into()));
        }
        if self.n_kept() == 0 {
            return Err(Error::InsufficientDraws("no iterations retained after burn-in".into()));
        }
        Ok(())
    }
}

/// Chain length settings without seed or initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Budget {
    pub const fn new(n_iter: usize, burn_in: usize, thin: usize) -> Self {
        Self { n_iter, burn_in, thin }
    }

    pub fn config(&self, seed: u64, init: Vec<f64>) -> McmcConfig {
        McmcConfig::new(self.n_iter, self.burn_in, self.thin, seed, init)
    }

    pub fn n_kept(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Acceptance rate over the non-adaptive iterations.
    pub accept_rate: f64,
    pub ess_min: f64,
    pub final_step_scale: f64,
    pub warnings: Vec<String>,
}

/// Effective sample size of one series by Geyer's initial positive sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = acf(2 * k) + acf(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10().max(1.0))
}

/// Smallest per-column ESS of a row-major draw matrix.
pub fn min_ess(data: &[f64], width: usize) -> f64 {
    (0..width)
        .map(|j| {
            let col: Vec<f64> = data.iter().skip(j).step_by(width).copied().collect();
            effective_sample_size(&col)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ess_of_iid_and_ar1_series() {
        let mut rng = rng_from_seed(3);
        let iid: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ess = effective_sample_size(&iid);
        assert!((ess / 20_000.0 - 1.0).abs() < 0.15, "iid ess {ess}");

        // AR(1) with rho = 0.9 has integrated time (1 + rho)/(1 - rho) = 19.
        let mut ar = vec![0.0; 50_000];
        for t in 1..ar.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            ar[t] = 0.9 * ar[t - 1] + e;
        }
        let ratio = ar.len() as f64 / effective_sample_size(&ar);
        assert!((ratio - 19.0).abs() < 4.0, "tau {ratio}");
    }

    #[test]
    fn config_validation() {
        let ok = McmcConfig::new(100, 50, 5, 0, vec![0.0]);
        assert!(ok.validate().is_ok());
        assert_eq!(ok.n_kept(), 10);
        assert!(McmcConfig::new(50, 50, 1, 0, vec![0.0]).validate().is_err());
        assert!(McmcConfig::new(100, 50, 0, 0, vec![0.0]).validate().is_err());
        assert!(matches!(
            McmcConfig::new(100, 50, 1, 0, vec![f64::NAN]).validate(),
            Err(Error::InvalidInit(_))
        ));
        assert!(matches!(
            McmcConfig::new(100, 95, 10, 0, vec![0.0]).validate(),
            Err(Error::InsufficientDraws(_))
        ));
    }
}
