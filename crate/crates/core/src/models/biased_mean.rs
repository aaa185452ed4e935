//! Multivariate biased mean: a clean sample `y₁ ~ N(θ₁, I)` and a larger
//! sample `y₂ ~ N(θ₁, σ²I)` that may be contaminated.
//!
//! θ₁ has prior N(0, I); θ₂ = σ² has prior ∝ 1/σ².

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::TwoModuleModel;
use crate::error::{invalid, Result};
use crate::linalg::cholesky_lower;
use crate::posterior::{summarize, Block, DrawLabel, DrawSet, ParamSplit};
use crate::risk::{LocalDriftModel, PointEstimates, ReplicationModel};
use crate::rng::{derive_seed, rng_from_seed, SmiRng};
use crate::samplers::{
    conjugate_inverse_gamma, conjugate_normal_mean, gibbs_compose, sample_inverse_gamma, sample_mvn, Budget,
    GibbsBlock,
};
use crate::smp::{estimate_weight, smp_mean, NumeratorMode};

/// Observations stored one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasedMeanData {
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
}

impl BiasedMeanData {
    pub fn new(y1: DMatrix<f64>, y2: DMatrix<f64>) -> Result<Self> {
        if y1.nrows() == 0 || y1.ncols() == 0 {
            return invalid("first sample must be nonempty");
        }
        if y2.nrows() > 0 && y2.ncols() != y1.ncols() {
            return invalid(format!("samples have {} and {} columns", y1.ncols(), y2.ncols()));
        }
        if y1.iter().chain(y2.iter()).any(|v| !v.is_finite()) {
            return invalid("observations must be finite");
        }
        Ok(Self { y1, y2 })
    }

    pub fn d1(&self) -> usize {
        self.y1.ncols()
    }

    pub fn stats(&self) -> SuffStats {
        let d1 = self.d1();
        let col_mean = |y: &DMatrix<f64>| -> DVector<f64> {
            if y.nrows() == 0 {
                DVector::zeros(d1)
            } else {
                y.row_mean().transpose()
            }
        };
        let ybar1 = col_mean(&self.y1);
        let ybar2 = col_mean(&self.y2);
        let ss2 = self.y2.row_iter().map(|r| (r.transpose() - &ybar2).norm_squared()).sum();
        SuffStats { n1: self.y1.nrows(), n2: self.y2.nrows(), d1, ybar1, ybar2, ss2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub n1: usize,
    pub n2: usize,
    pub d1: usize,
    pub ybar1: DVector<f64>,
    pub ybar2: DVector<f64>,
    /// Σᵢ ‖y₂ᵢ − ȳ₂‖²
    pub ss2: f64,
}

impl SuffStats {
    /// Σᵢ ‖y₂ᵢ − θ‖²
    fn ss2_at(&self, theta: &[f64]) -> f64 {
        let shift: f64 = self.ybar2.iter().zip(theta).map(|(m, t)| (m - t).powi(2)).sum();
        self.ss2 + self.n2 as f64 * shift
    }
}

/// Data-generating process and model definition.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasedMean {
    pub d1: usize,
    pub n1: usize,
    pub n2: usize,
    pub theta1_true: Vec<f64>,
    /// Variance of the clean second-sample errors.
    pub sigma2: f64,
    pub contamination_mean: f64,
    pub contamination_sd: f64,
}

impl BiasedMean {
    pub fn new(d1: usize) -> Self {
        Self {
            d1,
            n1: 100,
            n2: 1000,
            theta1_true: vec![0.0; d1],
            sigma2: 0.5,
            contamination_mean: -0.25,
            contamination_sd: 0.1,
        }
    }

    pub fn with_sizes(mut self, n1: usize, n2: usize) -> Self {
        self.n1 = n1;
        self.n2 = n2;
        self
    }

    /// Each second-sample observation is contaminated with probability
    /// `delta`; the indicator is shared by all coordinates of the vector.
    pub fn simulate(&self, delta: f64, seed: u64) -> Result<BiasedMeanData> {
        if self.d1 == 0 || self.theta1_true.len() != self.d1 {
            return invalid("d1 must be positive and match the truth");
        }
        if self.n1 < 2 || self.n2 < 2 {
            return invalid(format!("need n1, n2 >= 2, got {} and {}", self.n1, self.n2));
        }
        if !(0.0..=1.0).contains(&delta) {
            return invalid(format!("delta {delta} outside [0, 1]"));
        }
        let mut rng = rng_from_seed(seed);
        let d = self.d1;
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        let y1 = DMatrix::from_fn(self.n1, d, |_, j| self.theta1_true[j] + z());
        let clean_sd = self.sigma2.sqrt();
        let mut y2 = DMatrix::zeros(self.n2, d);
        for i in 0..self.n2 {
            let contaminated = rng.random::<f64>() < delta;
            for j in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                let eps = if contaminated {
                    self.contamination_mean + self.contamination_sd * e
                } else {
                    clean_sd * e
                };
                y2[(i, j)] = self.theta1_true[j] + eps;
            }
        }
        BiasedMeanData::new(y1, y2)
    }
}

/// Convenience wrapper with the default error distributions.
pub fn biased_mean_simulate(d1: usize, n1: usize, n2: usize, delta: f64, seed: u64) -> Result<BiasedMeanData> {
    BiasedMean::new(d1).with_sizes(n1, n2).simulate(delta, seed)
}

impl TwoModuleModel for BiasedMean {
    type Data = BiasedMeanData;

    fn dims(&self, data: &BiasedMeanData) -> (usize, usize) {
        (data.d1(), usize::from(data.y2.nrows() > 0))
    }

    fn log_f1(&self, data: &BiasedMeanData, theta1: &[f64]) -> f64 {
        let s = data.stats();
        let ss1: f64 = data.y1.row_iter().map(|r| r.iter().zip(theta1).map(|(y, t)| (y - t).powi(2)).sum::<f64>()).sum();
        -0.5 * ss1 - 0.5 * (s.n1 * s.d1) as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    fn log_f2(&self, data: &BiasedMeanData, theta1: &[f64], theta2: &[f64]) -> f64 {
        let s = data.stats();
        if s.n2 == 0 {
            return 0.0;
        }
        let s2 = theta2[0];
        if s2 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let m = (s.n2 * s.d1) as f64;
        -0.5 * m * (2.0 * std::f64::consts::PI * s2).ln() - s.ss2_at(theta1) / (2.0 * s2)
    }

    fn log_prior1(&self, theta1: &[f64]) -> f64 {
        -0.5 * theta1.iter().map(|t| t * t).sum::<f64>()
    }

    fn log_prior2(&self, theta2: &[f64], _theta1: &[f64]) -> f64 {
        match theta2.first() {
            None => 0.0,
            Some(&s2) if s2 > 0.0 => -s2.ln(),
            Some(_) => f64::NEG_INFINITY,
        }
    }

    fn truth(&self, data: &BiasedMeanData) -> ParamSplit {
        let t2 = if data.y2.nrows() > 0 { vec![self.sigma2] } else { vec![] };
        ParamSplit { theta1: self.theta1_true.clone(), theta2: t2 }
    }
}

/// Cut posterior N(n₁ȳ₁/(n₁+1), I/(n₁+1)) for θ₁ and, when the second
/// sample is present, σ² | θ₁, y₂ ~ InvGamma(n₂d₁/2, Σ‖y₂ᵢ − θ₁‖²/2).
pub fn biased_mean_cut(data: &BiasedMeanData, n_draws: usize, rng: &mut SmiRng) -> Result<DrawSet> {
    let s = data.stats();
    let d = s.d1;
    let (mean, cov) = conjugate_normal_mean(
        &DVector::zeros(d),
        &DMatrix::identity(d, d),
        &s.ybar1,
        &(DMatrix::identity(d, d) / s.n1 as f64),
    )?;
    let chol = cholesky_lower(&cov).expect("posterior covariance is positive definite");
    let d2 = usize::from(s.n2 > 0);
    let mut out = Vec::with_capacity(n_draws * (d + d2));
    for _ in 0..n_draws {
        let theta = sample_mvn(&mean, &chol, rng);
        out.extend(theta.iter());
        if d2 == 1 {
            let (a, b) = conjugate_inverse_gamma(0.0, 0.0, s.ss2_at(theta.as_slice()), s.n2 * d)?;
            out.push(sample_inverse_gamma(a, b, rng)?);
        }
    }
    DrawSet::from_rows(out, d, d2, DrawLabel::Cut)
}

/// Gibbs sampler for the full posterior, alternating θ₁ | σ² and σ² | θ₁.
/// `fixed_sigma2` pins σ² and skips its update.
pub fn biased_mean_exact(
    data: &BiasedMeanData,
    budget: &Budget,
    seed: u64,
    fixed_sigma2: Option<f64>,
) -> Result<DrawSet> {
    let s = data.stats();
    let d = s.d1;
    if s.n2 == 0 {
        // No second module: the full posterior is the cut posterior.
        let mut rng = rng_from_seed(seed);
        return Ok(biased_mean_cut(data, budget.n_kept(), &mut rng)?.with_label(DrawLabel::Exact));
    }
    if let Some(v) = fixed_sigma2 {
        if !(v > 0.0) {
            return invalid("fixed sigma2 must be positive");
        }
    }
    let (n1, n2) = (s.n1 as f64, s.n2 as f64);
    let mut init: Vec<f64> = s.ybar1.iter().map(|v| v * n1 / (n1 + 1.0)).collect();
    init.push(fixed_sigma2.unwrap_or(s.ss2 / (n2 * d as f64)).max(1e-8));

    let theta_block = GibbsBlock::new("theta1", 0..d, |st: &[f64], rng: &mut SmiRng| {
        let w2 = n2 / st[d];
        let prec = n1 + 1.0 + w2;
        let sd = prec.sqrt().recip();
        (0..d)
            .map(|j| (n1 * s.ybar1[j] + w2 * s.ybar2[j]) / prec + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    });
    let sigma_block = GibbsBlock::new("sigma2", d..d + 1, |st: &[f64], rng: &mut SmiRng| {
        if let Some(v) = fixed_sigma2 {
            return vec![v];
        }
        match conjugate_inverse_gamma(0.0, 0.0, s.ss2_at(&st[..d]), s.n2 * d)
            .and_then(|(a, b)| sample_inverse_gamma(a, b, rng))
        {
            Ok(v) => vec![v],
            Err(_) => vec![f64::NAN],
        }
    });
    let mut blocks = [theta_block, sigma_block];
    gibbs_compose(&mut blocks, &budget.config(seed, init), d, DrawLabel::Exact)
}

/// Replication driver for the contamination experiment.
#[derive(Debug, Clone)]
pub struct BiasedMeanExperiment {
    pub model: BiasedMean,
    pub n_cut_draws: usize,
    pub gibbs: Budget,
    pub mode: NumeratorMode,
}

impl BiasedMeanExperiment {
    /// Cut-only numerator tr Cov_cut / ‖Δ‖², 2000 cut draws, Gibbs 2500/500.
    pub fn new(d1: usize) -> Self {
        Self {
            model: BiasedMean::new(d1),
            n_cut_draws: 2000,
            gibbs: Budget::new(2500, 500, 1),
            mode: NumeratorMode::PlainCutOnly,
        }
    }

    pub fn fit(&self, data: &BiasedMeanData, seed: u64) -> Result<PointEstimates> {
        let mut rng = rng_from_seed(derive_seed(seed, &[1]));
        let cut = biased_mean_cut(data, self.n_cut_draws, &mut rng)?;
        let exact = biased_mean_exact(data, &self.gibbs, derive_seed(seed, &[2]), None)?;
        let cs = summarize(&cut, Block::Theta1)?;
        let es = summarize(&exact, Block::Theta1)?;
        let d = data.d1();
        let w = estimate_weight(&cs, &es, &DMatrix::identity(d, d), self.mode, None)?;
        Ok(PointEstimates {
            smp: smp_mean(&cs, &es, w.omega_plus).as_slice().to_vec(),
            cut: cs.mean.as_slice().to_vec(),
            exact: es.mean.as_slice().to_vec(),
            omega_plus: w.omega_plus,
        })
    }
}

impl ReplicationModel for BiasedMeanExperiment {
    fn truth_theta1(&self) -> Vec<f64> {
        self.model.theta1_true.clone()
    }

    fn sample_size(&self) -> usize {
        self.model.n1 + self.model.n2
    }

    fn estimate(&self, delta: f64, seed: u64) -> Result<PointEstimates> {
        let data = self.model.simulate(delta, derive_seed(seed, &[0]))?;
        self.fit(&data, seed)
    }
}

/// Local misspecification: contamination probability ψ/√n with
/// n = n₁ + n₂ split in the fixed ratio 1 : `n2_per_n1`.
#[derive(Debug, Clone)]
pub struct BiasedMeanDrift {
    pub experiment: BiasedMeanExperiment,
    pub psi: f64,
    pub n2_per_n1: f64,
}

impl BiasedMeanDrift {
    pub fn new(d1: usize, psi: f64) -> Self {
        Self { experiment: BiasedMeanExperiment::new(d1), psi, n2_per_n1: 10.0 }
    }

    fn sizes(&self, n: usize) -> (usize, usize) {
        let n1 = (n as f64 / (1.0 + self.n2_per_n1)).round() as usize;
        (n1, n - n1)
    }

    /// Limit of √n(θ̄_exact − θ₁,₀) per coordinate.
    ///
    /// The second sample's mean drifts by `c·ψ/√n` (c the contamination
    /// mean); the exact estimator weights it by (r₂/σ²)/(r₁ + r₂/σ²) with
    /// r₁, r₂ the sample fractions.
    pub fn analytic_exact_bias(&self) -> f64 {
        let m = &self.experiment.model;
        let r1 = 1.0 / (1.0 + self.n2_per_n1);
        let r2 = 1.0 - r1;
        let w = (r2 / m.sigma2) / (r1 + r2 / m.sigma2);
        m.contamination_mean * self.psi * w
    }
}

impl LocalDriftModel for BiasedMeanDrift {
    fn truth_theta1(&self) -> Vec<f64> {
        self.experiment.model.theta1_true.clone()
    }

    fn estimate_at(&self, n: usize, seed: u64) -> Result<PointEstimates> {
        let (n1, n2) = self.sizes(n);
        let delta = self.psi / (n as f64).sqrt();
        let model = self.experiment.model.clone().with_sizes(n1, n2);
        let data = model.simulate(delta, derive_seed(seed, &[0]))?;
        self.experiment.fit(&data, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_stats(d: &DrawSet, j: usize) -> (f64, f64) {
        let xs = d.column(j);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn simulator_moments() {
        let clean = biased_mean_simulate(2, 10, 200_000, 0.0, 1).unwrap();
        let s = clean.stats();
        let var = s.ss2 / (s.n2 * 2) as f64;
        assert!((var - 0.5).abs() < 0.01, "var {var}");

        let dirty = biased_mean_simulate(2, 10, 200_000, 1.0, 1).unwrap();
        let s = dirty.stats();
        assert!(s.ybar2.iter().all(|m| (m + 0.25).abs() < 0.001));

        assert_eq!(biased_mean_simulate(3, 5, 7, 0.4, 9).unwrap(), biased_mean_simulate(3, 5, 7, 0.4, 9).unwrap());
        assert!(biased_mean_simulate(0, 5, 7, 0.4, 9).is_err());
        assert!(biased_mean_simulate(1, 1, 7, 0.4, 9).is_err());
        assert!(biased_mean_simulate(1, 5, 7, 1.4, 9).is_err());
    }

    #[test]
    fn cut_posterior_matches_conjugacy() {
        let data = biased_mean_simulate(2, 100, 50, 0.3, 4).unwrap();
        let s = data.stats();
        let n = 100_000;
        let cut = biased_mean_cut(&data, n, &mut rng_from_seed(5)).unwrap();
        assert_eq!((cut.d1(), cut.d2()), (2, 1));
        for j in 0..2 {
            let (m, v) = col_stats(&cut, j);
            let want = 100.0 * s.ybar1[j] / 101.0;
            assert!((m - want).abs() < 3.0 * (v / n as f64).sqrt());
            assert!((v * 101.0 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn exact_with_pinned_variance_matches_known_variance_oracle() {
        let data = biased_mean_simulate(1, 100, 1000, 0.5, 6).unwrap();
        let s = data.stats();
        let d = biased_mean_exact(&data, &Budget::new(20_500, 500, 1), 7, Some(0.5)).unwrap();
        let (m, v) = col_stats(&d, 0);
        let want = (100.0 * s.ybar1[0] + 2000.0 * s.ybar2[0]) / (101.0 + 2000.0);
        assert!((m - want).abs() < 3.0 * (v / 20_000.0).sqrt(), "{m} vs {want}");
        assert!(d.column(1).iter().all(|&x| x == 0.5));
    }

    #[test]
    fn empty_second_sample_reduces_to_cut() {
        let full = biased_mean_simulate(1, 100, 10, 0.0, 8).unwrap();
        let data = BiasedMeanData::new(full.y1.clone(), DMatrix::zeros(0, 1)).unwrap();
        let n = 100_000;
        let exact = biased_mean_exact(&data, &Budget::new(n + 1, 1, 1), 1, None).unwrap();
        let cut = biased_mean_cut(&data, n, &mut rng_from_seed(2)).unwrap();
        let (mut a, mut b) = (exact.column(0), cut.column(0));
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ecdf = |v: &[f64], x: f64| v.partition_point(|&y| y <= x) as f64 / v.len() as f64;
        let ks = a.iter().step_by(50).map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs()).fold(0.0, f64::max);
        assert!(ks < 0.02, "ks {ks}");
    }

    #[test]
    fn cut_kernel_is_the_gaussian_density_up_to_a_constant() {
        let model = BiasedMean::new(2).with_sizes(30, 40);
        let data = model.simulate(0.2, 3).unwrap();
        let s = data.stats();
        let m: Vec<f64> = s.ybar1.iter().map(|v| v * 30.0 / 31.0).collect();
        let log_n = |t: &[f64]| -15.5 * t.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let pts = [[0.1, -0.3], [1.0, 2.0], [-0.7, 0.05]];
        let c0 = model.log_cut_kernel(&data, &pts[0]) - log_n(&pts[0]);
        for p in &pts[1..] {
            let c = model.log_cut_kernel(&data, p) - log_n(p);
            assert!((c - c0).abs() < 1e-9 * c0.abs().max(1.0));
        }
        assert!((model.log_cut_kernel(&data, &pts[1]) - model.log_f1(&data, &pts[1]) - model.log_prior1(&pts[1])).abs() < 1e-12);
    }

    #[test]
    fn conditional_kernel_matches_sigma2_update() {
        // log π(σ² | θ₁, y₂) from the model equals the inverse-gamma log density up to a constant.
        let model = BiasedMean::new(2).with_sizes(20, 30);
        let data = model.simulate(0.5, 1).unwrap();
        let theta = [0.2, -0.1];
        let (a, b) = conjugate_inverse_gamma(0.0, 0.0, data.stats().ss2_at(&theta), 60).unwrap();
        let ig = |v: f64| -(a + 1.0) * v.ln() - b / v;
        let c0 = model.log_conditional2(&data, &theta, &[0.4]) - ig(0.4);
        for v in [0.1, 0.9, 3.0] {
            assert!((model.log_conditional2(&data, &theta, &[v]) - ig(v) - c0).abs() < 1e-9);
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let mut exp = BiasedMeanExperiment::new(2);
        exp.n_cut_draws = 200;
        exp.gibbs = Budget::new(300, 100, 1);
        let a = exp.estimate(0.3, 42).unwrap();
        assert_eq!(a, exp.estimate(0.3, 42).unwrap());
        assert!((0.0..=1.0).contains(&a.omega_plus));
    }
}
