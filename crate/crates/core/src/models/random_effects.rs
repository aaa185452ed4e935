//! Normal-normal random effects: `Z_ij ~ N(β_i, φ_i²)`, `β_i ~ N(0, ψ²)`,
//! for groups i = 1..N with J observations each.
//!
//! θ₁ = (φ₁, …, φ_N) is informed by the within-group sums of squares s²
//! alone; θ₂ = (ψ, β₁, …, β_N) enters through the group means Z̄. Priors are
//! π(φ_i²) ∝ 1/φ_i² and π(ψ²) ∝ 1/ψ².

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use super::TwoModuleModel;
use crate::error::{invalid, Result};
use crate::posterior::{summarize, Block, DrawLabel, DrawSet, ParamSplit};
use crate::risk::{PointEstimates, ReplicationModel};
use crate::rng::{derive_seed, rng_from_seed, SmiRng};
use crate::samplers::{gibbs_compose, sample_inverse_gamma, Budget, GibbsBlock};
use crate::smp::{estimate_weight, smp_mean, NumeratorMode};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectsData {
    pub zbar: Vec<f64>,
    /// Within-group sums of squares Σ_j (Z_ij − Z̄_i)².
    pub s2: Vec<f64>,
    pub j: usize,
}

impl RandomEffectsData {
    pub fn new(zbar: Vec<f64>, s2: Vec<f64>, j: usize) -> Result<Self> {
        if zbar.len() != s2.len() || zbar.len() < 2 {
            return invalid("need at least two groups with matching zbar and s2");
        }
        if j < 2 {
            return invalid("need at least two observations per group");
        }
        if s2.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || zbar.iter().any(|v| !v.is_finite()) {
            return invalid("s2 must be finite and nonnegative, zbar finite");
        }
        Ok(Self { zbar, s2, j })
    }

    /// Sufficient statistics from raw observations, one row per group.
    pub fn from_groups(groups: &[Vec<f64>]) -> Result<Self> {
        let j = groups.first().map_or(0, Vec::len);
        if groups.iter().any(|g| g.len() != j) {
            return invalid("groups must have equal sizes");
        }
        let zbar: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / j as f64).collect();
        let s2 = groups.iter().zip(&zbar).map(|(g, m)| g.iter().map(|z| (z - m).powi(2)).sum()).collect();
        Self::new(zbar, s2, j)
    }

    pub fn n_groups(&self) -> usize {
        self.zbar.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffects {
    pub n_groups: usize,
    pub j: usize,
    pub phi_true: f64,
    pub psi_true: f64,
    /// Use the cut kernel (φ²)^{-(J+1)/2} exp{−J s²/(2φ²)} instead of the
    /// one implied by s² ~ φ² χ²_{J−1}.
    pub paper_kernel: bool,
}

impl Default for RandomEffects {
    fn default() -> Self {
        Self { n_groups: 100, j: 10, phi_true: 0.5, psi_true: 1.0, paper_kernel: false }
    }
}

impl RandomEffects {
    /// β₁ is shifted by `delta`; other groups are drawn from the prior.
    pub fn simulate(&self, delta: f64, seed: u64) -> Result<RandomEffectsData> {
        if self.n_groups < 2 || self.j < 2 {
            return invalid(format!("need N >= 2 and J >= 2, got {} and {}", self.n_groups, self.j));
        }
        if !delta.is_finite() {
            return invalid("delta must be finite");
        }
        let mut rng = rng_from_seed(seed);
        let groups: Vec<Vec<f64>> = (0..self.n_groups)
            .map(|i| {
                let mut beta = self.psi_true * rng.sample::<f64, _>(StandardNormal);
                if i == 0 {
                    beta += delta;
                }
                (0..self.j).map(|_| beta + self.phi_true * rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        RandomEffectsData::from_groups(&groups)
    }

    /// Inverse-gamma (shape, rate) of the cut posterior for φ_i².
    pub fn cut_params(&self, data: &RandomEffectsData, i: usize) -> (f64, f64) {
        let jf = data.j as f64;
        let rate_scale = if self.paper_kernel { jf } else { 1.0 };
        ((jf - 1.0) / 2.0, rate_scale * data.s2[i] / 2.0)
    }
}

pub fn random_effects_simulate(n_groups: usize, j: usize, delta: f64, seed: u64) -> Result<RandomEffectsData> {
    RandomEffects { n_groups, j, ..Default::default() }.simulate(delta, seed)
}

impl TwoModuleModel for RandomEffects {
    type Data = RandomEffectsData;

    fn dims(&self, data: &RandomEffectsData) -> (usize, usize) {
        (data.n_groups(), data.n_groups() + 1)
    }

    /// Σ_i log Gamma(s_i²; (J−1)/2, rate 1/(2φ_i²)), or the alternative
    /// kernel's likelihood when `paper_kernel` is set.
    fn log_f1(&self, data: &RandomEffectsData, phi: &[f64]) -> f64 {
        let jf = data.j as f64;
        let k = (jf - 1.0) / 2.0;
        let scale = if self.paper_kernel { jf } else { 1.0 };
        phi.iter()
            .zip(&data.s2)
            .map(|(&p, &s2)| {
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let v = p * p;
                (k - 1.0) * s2.ln() - scale * s2 / (2.0 * v) - k * (2.0 * v / scale).ln() - ln_gamma(k)
            })
            .sum()
    }

    /// log π(θ₂ | ·) for θ₂ = (ψ, β): Σ log N(Z̄_i; β_i, φ_i²/J).
    fn log_f2(&self, data: &RandomEffectsData, phi: &[f64], theta2: &[f64]) -> f64 {
        let jf = data.j as f64;
        let beta = &theta2[1..];
        phi.iter()
            .zip(beta)
            .zip(&data.zbar)
            .map(|((&p, &b), &z)| {
                let var = p * p / jf;
                -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (z - b).powi(2) / (2.0 * var)
            })
            .sum()
    }

    /// π(φ²) ∝ 1/φ² expressed as a density on φ: ∝ 1/φ.
    fn log_prior1(&self, phi: &[f64]) -> f64 {
        phi.iter().map(|&p| if p > 0.0 { -p.ln() } else { f64::NEG_INFINITY }).sum()
    }

    /// β_i ~ N(0, ψ²) and π(ψ) ∝ 1/ψ.
    fn log_prior2(&self, theta2: &[f64], _phi: &[f64]) -> f64 {
        let psi = theta2[0];
        if psi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let v = psi * psi;
        let beta = &theta2[1..];
        -psi.ln() - beta.iter().map(|b| 0.5 * (2.0 * std::f64::consts::PI * v).ln() + b * b / (2.0 * v)).sum::<f64>()
    }

    /// θ₂ holds ψ only: the group effects are random, not fixed parameters.
    fn truth(&self, data: &RandomEffectsData) -> ParamSplit {
        ParamSplit { theta1: vec![self.phi_true; data.n_groups()], theta2: vec![self.psi_true] }
    }
}

/// Independent cut draws of φ_i (square roots of inverse-gamma draws).
pub fn random_effects_cut(
    model: &RandomEffects,
    data: &RandomEffectsData,
    n_draws: usize,
    rng: &mut SmiRng,
) -> Result<DrawSet> {
    let n = data.n_groups();
    let params: Vec<(f64, f64)> = (0..n).map(|i| model.cut_params(data, i)).collect();
    if params.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0)) {
        return invalid("cut posterior is improper (a group has zero sum of squares)");
    }
    let mut out = Vec::with_capacity(n_draws * n);
    for _ in 0..n_draws {
        for &(a, b) in &params {
            out.push(sample_inverse_gamma(a, b, rng)?.sqrt());
        }
    }
    DrawSet::from_rows(out, n, 0, DrawLabel::Cut)
}

/// β | φ, ψ, Z̄ and ψ | β updates shared by the exact sampler and the
/// cut posterior's conditional step.
fn draw_beta(data: &RandomEffectsData, phi: &[f64], psi: f64, rng: &mut SmiRng) -> Vec<f64> {
    let jf = data.j as f64;
    let prior_prec = 1.0 / (psi * psi);
    phi.iter()
        .zip(&data.zbar)
        .map(|(&p, &z)| {
            let lik_prec = jf / (p * p);
            let prec = lik_prec + prior_prec;
            lik_prec * z / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt()
        })
        .collect()
}

fn draw_psi(beta: &[f64], rng: &mut SmiRng) -> f64 {
    let ss: f64 = beta.iter().map(|b| b * b).sum();
    sample_inverse_gamma(beta.len() as f64 / 2.0, ss / 2.0, rng).map_or(f64::NAN, f64::sqrt)
}

/// Cut draws of φ with θ₂ = (ψ, β) from π(θ₂ | φ, Z̄). For each φ draw the
/// (β, ψ) chain is advanced `inner_sweeps` Gibbs sweeps from its previous
/// state.
pub fn random_effects_cut_joint(
    model: &RandomEffects,
    data: &RandomEffectsData,
    n_draws: usize,
    inner_sweeps: usize,
    seed: u64,
) -> Result<DrawSet> {
    let mut rng = rng_from_seed(seed);
    let phi = random_effects_cut(model, data, n_draws, &mut rng)?;
    let n = data.n_groups();
    let mut beta = data.zbar.clone();
    let mut psi = sample_sd(&data.zbar).max(1e-3);
    // Warm-up at the first φ draw.
    for _ in 0..inner_sweeps.max(1) * 10 {
        beta = draw_beta(data, phi.row(0), psi, &mut rng);
        psi = draw_psi(&beta, &mut rng);
    }
    let mut out = Vec::with_capacity(n_draws * (2 * n + 1));
    for row in phi.rows() {
        for _ in 0..inner_sweeps.max(1) {
            beta = draw_beta(data, row, psi, &mut rng);
            psi = draw_psi(&beta, &mut rng);
        }
        out.extend_from_slice(row);
        out.push(psi);
        out.extend_from_slice(&beta);
    }
    DrawSet::from_rows(out, n, n + 1, DrawLabel::Cut)
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Gibbs sampler for the full posterior over (φ, ψ, β).
pub fn random_effects_exact(data: &RandomEffectsData, budget: &Budget, seed: u64) -> Result<DrawSet> {
    let n = data.n_groups();
    let jf = data.j as f64;
    let mut init: Vec<f64> = data.s2.iter().map(|s| (s / (jf - 1.0)).sqrt().max(1e-3)).collect();
    init.push(sample_sd(&data.zbar).max(1e-3));
    init.extend_from_slice(&data.zbar);
    let (phi_r, psi_i, beta_r) = (0..n, n, n + 1..2 * n + 1);

    let mut blocks = [
        GibbsBlock::new("beta", beta_r.clone(), |s: &[f64], rng: &mut SmiRng| draw_beta(data, &s[..n], s[n], rng)),
        GibbsBlock::new("phi", phi_r, |s: &[f64], rng: &mut SmiRng| {
            let beta = &s[n + 1..];
            (0..n)
                .map(|i| {
                    let ss = data.s2[i] + jf * (data.zbar[i] - beta[i]).powi(2);
                    sample_inverse_gamma(jf / 2.0, ss / 2.0, rng).map_or(f64::NAN, f64::sqrt)
                })
                .collect()
        }),
        GibbsBlock::new("psi", psi_i..psi_i + 1, |s: &[f64], rng: &mut SmiRng| vec![draw_psi(&s[n + 1..], rng)]),
    ];
    gibbs_compose(&mut blocks, &budget.config(seed, init), n, DrawLabel::Exact)
}

/// Which curvature the mixing weight uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightCurvature {
    /// Identity over all of φ.
    FullBlock,
    /// e₁e₁ᵀ: only φ₁ enters.
    Component,
}

#[derive(Debug, Clone)]
pub struct RandomEffectsExperiment {
    pub model: RandomEffects,
    pub n_cut_draws: usize,
    pub gibbs: Budget,
    pub mode: NumeratorMode,
    pub curvature: WeightCurvature,
}

impl Default for RandomEffectsExperiment {
    fn default() -> Self {
        Self {
            model: RandomEffects::default(),
            n_cut_draws: 1000,
            gibbs: Budget::new(1200, 200, 1),
            mode: NumeratorMode::Conservative,
            curvature: WeightCurvature::FullBlock,
        }
    }
}

impl RandomEffectsExperiment {
    pub fn fit(&self, data: &RandomEffectsData, seed: u64) -> Result<PointEstimates> {
        let mut rng = rng_from_seed(derive_seed(seed, &[1]));
        let cut = random_effects_cut(&self.model, data, self.n_cut_draws, &mut rng)?;
        let exact = random_effects_exact(data, &self.gibbs, derive_seed(seed, &[2]))?;
        let cs = summarize(&cut, Block::Theta1)?;
        let es = summarize(&exact, Block::Theta1)?;
        let n = data.n_groups();
        let ups = match self.curvature {
            WeightCurvature::FullBlock => DMatrix::identity(n, n),
            WeightCurvature::Component => {
                let mut u = DMatrix::zeros(n, n);
                u[(0, 0)] = 1.0;
                u
            }
        };
        let w = estimate_weight(&cs, &es, &ups, self.mode, None)?;
        Ok(PointEstimates {
            smp: smp_mean(&cs, &es, w.omega_plus).as_slice().to_vec(),
            cut: cs.mean.as_slice().to_vec(),
            exact: es.mean.as_slice().to_vec(),
            omega_plus: w.omega_plus,
        })
    }
}

impl ReplicationModel for RandomEffectsExperiment {
    fn truth_theta1(&self) -> Vec<f64> {
        vec![self.model.phi_true; self.model.n_groups]
    }

    fn sample_size(&self) -> usize {
        self.model.n_groups * self.model.j
    }

    fn estimate(&self, delta: f64, seed: u64) -> Result<PointEstimates> {
        let data = self.model.simulate(delta, derive_seed(seed, &[0]))?;
        self.fit(&data, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn simulator_moments() {
        let d = random_effects_simulate(4000, 10, 0.0, 1).unwrap();
        assert!((mean(&d.s2) - 9.0 * 0.25).abs() < 0.05);
        // Z̄_i − β_i has variance φ²/J; across groups Z̄ ~ N(0, 1 + 0.025).
        assert!(mean(&d.zbar).abs() < 0.06);
        assert_eq!(random_effects_simulate(5, 3, 1.0, 2).unwrap(), random_effects_simulate(5, 3, 1.0, 2).unwrap());
        assert!(random_effects_simulate(1, 10, 0.0, 0).is_err());
        assert!(random_effects_simulate(10, 1, 0.0, 0).is_err());
    }

    #[test]
    fn shifted_group_mean() {
        let shifted: Vec<f64> = (0..400).map(|s| random_effects_simulate(2, 10, 3.0, s).unwrap().zbar[0]).collect();
        assert!((mean(&shifted) - 3.0).abs() < 0.2);
    }

    #[test]
    fn cut_kernel_matches_inverse_gamma_density() {
        for paper_kernel in [false, true] {
            let model = RandomEffects { n_groups: 3, paper_kernel, ..Default::default() };
            let data = model.simulate(0.5, 4).unwrap();
            // Density of φ when φ² ~ IG(a, b): 2φ·IG(φ²) ∝ φ^{-2a-1} exp(−b/φ²).
            let log_ig_phi = |phi: &[f64]| -> f64 {
                (0..3)
                    .map(|i| {
                        let (a, b) = model.cut_params(&data, i);
                        -(2.0 * a + 1.0) * phi[i].ln() - b / (phi[i] * phi[i])
                    })
                    .sum()
            };
            let pts = [[0.3, 0.5, 0.7], [1.0, 0.2, 0.45], [0.6, 0.6, 0.9]];
            let c0 = model.log_cut_kernel(&data, &pts[0]) - log_ig_phi(&pts[0]);
            for p in &pts[1..] {
                let c = model.log_cut_kernel(&data, p) - log_ig_phi(p);
                assert!((c - c0).abs() < 1e-10, "paper_kernel {paper_kernel}: {c} vs {c0}");
            }
        }
    }

    #[test]
    fn conditional_kernel_matches_beta_update() {
        // log π(β | φ, ψ, Z̄) is Gaussian with the moments used by draw_beta.
        let model = RandomEffects { n_groups: 2, ..Default::default() };
        let data = model.simulate(0.0, 9).unwrap();
        let phi = [0.4, 0.6];
        let psi = 1.3;
        let gauss = |beta: &[f64]| -> f64 {
            (0..2)
                .map(|i| {
                    let lp = data.j as f64 / (phi[i] * phi[i]);
                    let prec = lp + 1.0 / (psi * psi);
                    -0.5 * prec * (beta[i] - lp * data.zbar[i] / prec).powi(2)
                })
                .sum()
        };
        let at = |b: [f64; 2]| model.log_conditional2(&data, &phi, &[psi, b[0], b[1]]) - gauss(&b);
        let c0 = at([0.0, 0.0]);
        for b in [[1.0, -1.0], [0.3, 2.0]] {
            assert!((at(b) - c0).abs() < 1e-10);
        }
    }

    #[test]
    fn cut_marginal_matches_quadrature() {
        let model = RandomEffects { n_groups: 2, ..Default::default() };
        let data = model.simulate(0.0, 10).unwrap();
        let n = 100_000;
        let cut = random_effects_cut(&model, &data, n, &mut rng_from_seed(3)).unwrap();
        let v: Vec<f64> = cut.column(0).iter().map(|p| p * p).collect();
        let m = mean(&v);
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        // Kernel (v)^{-(J+1)/2} exp(−s²/(2v)) on a log grid.
        let s2 = data.s2[0];
        let k = |u: f64| {
            let v = u.exp();
            (-(data.j as f64 + 1.0) / 2.0 * v.ln() - s2 / (2.0 * v)).exp() * v
        };
        let (lo, hi, steps) = (-10.0, 8.0, 200_000);
        let h = (hi - lo) / steps as f64;
        let (mut z, mut z1) = (0.0, 0.0);
        for i in 0..=steps {
            let u = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            z += w * k(u);
            z1 += w * k(u) * u.exp();
        }
        let want = z1 / z;
        assert!((m - want).abs() < 3.0 * sd / (n as f64).sqrt(), "{m} vs {want}");
    }

    #[test]
    fn exact_and_cut_agree_without_conflict() {
        let model = RandomEffects { n_groups: 10, ..Default::default() };
        let data = model.simulate(0.0, 12).unwrap();
        let exact = random_effects_exact(&data, &Budget::new(11_000, 1_000, 1), 13).unwrap();
        let cut = random_effects_cut(&model, &data, 10_000, &mut rng_from_seed(14)).unwrap();
        let (mut a, mut b) = (exact.column(3), cut.column(3));
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ecdf = |v: &[f64], x: f64| v.partition_point(|&y| y <= x) as f64 / v.len() as f64;
        let ks = a.iter().chain(&b).map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs()).fold(0.0, f64::max);
        assert!(ks < 0.05, "ks {ks}");
    }

    #[test]
    fn conflict_inflates_exact_phi1() {
        let model = RandomEffects::default();
        let data = model.simulate(1.9, 15).unwrap();
        let exact = random_effects_exact(&data, &Budget::new(6_000, 1_000, 1), 16).unwrap();
        let cut = random_effects_cut(&model, &data, 5_000, &mut rng_from_seed(17)).unwrap();
        assert!(mean(&exact.column(0)) > mean(&cut.column(0)));
    }

    #[test]
    fn joint_cut_draws_carry_theta2() {
        let model = RandomEffects { n_groups: 5, ..Default::default() };
        let data = model.simulate(0.0, 3).unwrap();
        let d = random_effects_cut_joint(&model, &data, 200, 5, 4).unwrap();
        assert_eq!((d.d1(), d.d2()), (5, 6));
        assert!(d.column(5).iter().all(|&psi| psi > 0.0));
    }
}
