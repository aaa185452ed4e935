//! HPV prevalence and cervical cancer incidence.
//!
//! Module 1: `X_i ~ Binomial(n_i, θ₁ᵢ)` with uniform priors on θ₁ᵢ.
//! Module 2: `Y_i ~ Poisson(T_i exp(θ₂₁ + θ₂₂ θ₁ᵢ))` with independent
//! N(0, 1000) priors on θ₂.

use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::TwoModuleModel;
use crate::error::{invalid, Error, Result};
use crate::posterior::{summarize, Block, DrawLabel, DrawSet, ParamSplit};
use crate::rng::{derive_seed, rng_from_seed, SmiRng};
use crate::samplers::{adaptive_rwm, sir_resample, Budget, ChainDiagnostics, TargetDensity};
use crate::smp::{build_smp, estimate_weight, MixtureWeight, NumeratorMode, SmpResult};

pub const HPV_HEADER: [&str; 5] = ["country", "x_hpv", "n_survey", "y_cancer", "t_womanyears"];
pub const EXPECTED_COUNTRIES: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpvRow {
    pub country: String,
    pub x_hpv: u64,
    pub n_survey: u64,
    pub y_cancer: u64,
    pub t_womanyears: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpvData {
    pub rows: Vec<HpvRow>,
}

impl HpvData {
    pub fn new(rows: Vec<HpvRow>) -> Result<Self> {
        if rows.is_empty() {
            return invalid("HPV data has no rows");
        }
        for (i, r) in rows.iter().enumerate() {
            if r.x_hpv > r.n_survey {
                return invalid(format!("row {}: x_hpv {} exceeds n_survey {}", i + 1, r.x_hpv, r.n_survey));
            }
            if !(r.t_womanyears > 0.0 && r.t_womanyears.is_finite()) {
                return invalid(format!("row {}: t_womanyears must be positive", i + 1));
            }
        }
        if rows.len() != EXPECTED_COUNTRIES {
            log::warn!("HPV data has {} rows, expected {EXPECTED_COUNTRIES}", rows.len());
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn countries(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.country.clone()).collect()
    }

    /// Conjugate cut posterior means (X + 1)/(n + 2).
    pub fn beta_means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| (r.x_hpv as f64 + 1.0) / (r.n_survey as f64 + 2.0)).collect()
    }
}

/// Reads the five-column CSV. Errors carry the 1-based file line.
pub fn hpv_load(path: &Path) -> Result<HpvData> {
    let parse_err = |row: usize, message: String| Error::Parse { path: path.to_path_buf(), row, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HPV_HEADER {
        return Err(parse_err(1, format!("expected header `{}`, got `{}`", HPV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(rows.len() + 2, |p| p.line() as usize);
        let count = |i: usize| -> Result<u64> {
            rec[i].parse::<u64>().map_err(|_| parse_err(line, format!("{} `{}` is not a nonnegative integer", HPV_HEADER[i], &rec[i])))
        };
        let t: f64 = rec[4].parse().map_err(|_| parse_err(line, format!("t_womanyears `{}` is not a number", &rec[4])))?;
        let row = HpvRow { country: rec[0].to_string(), x_hpv: count(1)?, n_survey: count(2)?, y_cancer: count(3)?, t_womanyears: t };
        if row.x_hpv > row.n_survey {
            return Err(parse_err(line, format!("x_hpv {} exceeds n_survey {}", row.x_hpv, row.n_survey)));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(parse_err(line, format!("t_womanyears must be positive, got {t}")));
        }
        rows.push(row);
    }
    HpvData::new(rows)
}

pub fn hpv_write(data: &HpvData, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(HPV_HEADER)?;
    for r in &data.rows {
        w.write_record([
            r.country.clone(),
            r.x_hpv.to_string(),
            r.n_survey.to_string(),
            r.y_cancer.to_string(),
            r.t_womanyears.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpvModel {
    pub prior_var: f64,
}

impl Default for HpvModel {
    fn default() -> Self {
        Self { prior_var: 1000.0 }
    }
}

fn ln_poisson(y: u64, mu: f64) -> f64 {
    let y = y as f64;
    y * mu.ln() - mu - ln_gamma(y + 1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

impl TwoModuleModel for HpvModel {
    type Data = HpvData;

    fn dims(&self, data: &HpvData) -> (usize, usize) {
        (data.len(), 2)
    }

    fn log_f1(&self, data: &HpvData, theta1: &[f64]) -> f64 {
        data.rows
            .iter()
            .zip(theta1)
            .map(|(r, &p)| {
                if !(0.0..=1.0).contains(&p) {
                    return f64::NEG_INFINITY;
                }
                let (x, n) = (r.x_hpv as f64, r.n_survey as f64);
                let a = if x > 0.0 { x * p.ln() } else { 0.0 };
                let b = if n - x > 0.0 { (n - x) * (1.0 - p).ln() } else { 0.0 };
                ln_choose(r.n_survey, r.x_hpv) + a + b
            })
            .sum()
    }

    fn log_f2(&self, data: &HpvData, theta1: &[f64], theta2: &[f64]) -> f64 {
        data.rows
            .iter()
            .zip(theta1)
            .map(|(r, &p)| ln_poisson(r.y_cancer, r.t_womanyears * (theta2[0] + theta2[1] * p).exp()))
            .sum()
    }

    fn log_prior1(&self, theta1: &[f64]) -> f64 {
        if theta1.iter().all(|p| (0.0..=1.0).contains(p)) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_prior2(&self, theta2: &[f64], _theta1: &[f64]) -> f64 {
        -theta2.iter().map(|t| t * t).sum::<f64>() / (2.0 * self.prior_var)
    }

    /// No fixed truth is known for observed data; the conjugate cut means
    /// stand in for θ₁ and θ₂ is left at the prior mean.
    fn truth(&self, data: &HpvData) -> ParamSplit {
        ParamSplit { theta1: data.beta_means(), theta2: vec![0.0, 0.0] }
    }
}

/// Poisson-module log density of θ₂ given θ₁ with gradient and Hessian.
fn conditional2_derivs(data: &HpvData, theta1: &[f64], t2: Vector2<f64>, prior_var: f64) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let mut f = -t2.norm_squared() / (2.0 * prior_var);
    let mut g = -t2 / prior_var;
    let mut h = -Matrix2::identity() / prior_var;
    for (r, &p) in data.rows.iter().zip(theta1) {
        let eta = t2[0] + t2[1] * p;
        let mu = r.t_womanyears * eta.exp();
        let y = r.y_cancer as f64;
        f += y * eta - mu;
        g += Vector2::new(1.0, p) * (y - mu);
        h -= Matrix2::new(1.0, p, p, p * p) * mu;
    }
    (f, g, h)
}

/// Newton ascent to the mode of π(θ₂ | θ₁, Y), with step halving.
fn conditional2_mode(data: &HpvData, theta1: &[f64], start: Vector2<f64>, prior_var: f64) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let mut x = start;
    let (mut f, mut g, mut h) = conditional2_derivs(data, theta1, x, prior_var);
    for _ in 0..100 {
        let step = h.lu().solve(&(-g)).ok_or_else(|| Error::Numeric("singular Hessian in Newton step".into()))?;
        let mut t = 1.0;
        loop {
            let cand = x + step * t;
            let (fc, gc, hc) = conditional2_derivs(data, theta1, cand, prior_var);
            if fc.is_finite() && fc >= f - 1e-12 {
                x = cand;
                f = fc;
                g = gc;
                h = hc;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::Numeric("Newton line search failed".into()));
            }
        }
        if (step * t).amax() < 1e-10 {
            return Ok((x, h));
        }
    }
    Ok((x, h))
}

/// Settings for fitting the HPV model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpvConfig {
    pub n_draws: usize,
    pub sir_proposals: usize,
    pub exact: Budget,
}

impl Default for HpvConfig {
    fn default() -> Self {
        Self { n_draws: 1000, sir_proposals: 1000, exact: Budget::new(200_000, 100_000, 100) }
    }
}

/// Cut posterior: θ₁ᵢ ~ Beta(Xᵢ+1, nᵢ−Xᵢ+1), then one SIR draw of θ₂ | θ₁, Y
/// from a normal approximation at the conditional mode. Returns the draws
/// and any fallback warnings.
pub fn hpv_cut(data: &HpvData, cfg: &HpvConfig, seed: u64) -> Result<(DrawSet, Vec<String>)> {
    let model = HpvModel::default();
    let k = data.len();
    let mut rng = rng_from_seed(seed);
    let betas: Vec<Beta<f64>> = data
        .rows
        .iter()
        .map(|r| Beta::new(r.x_hpv as f64 + 1.0, (r.n_survey - r.x_hpv) as f64 + 1.0))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("beta parameters: {e}")))?;

    let total_y: f64 = data.rows.iter().map(|r| r.y_cancer as f64).sum();
    let total_t: f64 = data.rows.iter().map(|r| r.t_womanyears).sum();
    let mut start = Vector2::new(((total_y + 0.5) / total_t).ln(), 0.0);
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(cfg.n_draws * (k + 2));
    let mut proposal = vec![0.0; cfg.sir_proposals * 2];
    let mut logw = vec![0.0; cfg.sir_proposals];

    for _ in 0..cfg.n_draws {
        let theta1: Vec<f64> = betas.iter().map(|b| b.sample(&mut rng)).collect();
        let (mode, hess) = conditional2_mode(data, &theta1, start, model.prior_var)?;
        start = mode;
        let neg_h = -hess;
        let (chol, inv_cov) = match neg_h.cholesky() {
            Some(c) => {
                let cov = c.inverse();
                (cov.cholesky().map(|cc| cc.l()), Some(neg_h))
            }
            None => (None, None),
        };
        let (l, prec) = match (chol, inv_cov) {
            (Some(l), Some(p)) => (l, p),
            _ => {
                let d = Vector2::new((-1.0 / hess[(0, 0)]).abs(), (-1.0 / hess[(1, 1)]).abs());
                let msg = "SIR proposal covariance not positive definite; using diagonal Hessian".to_string();
                log::warn!("{msg}");
                if !warnings.contains(&msg) {
                    warnings.push(msg);
                }
                (Matrix2::from_diagonal(&d.map(f64::sqrt)), Matrix2::from_diagonal(&d.map(|v| 1.0 / v)))
            }
        };
        for i in 0..cfg.sir_proposals {
            let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let t2 = mode + l * z;
            proposal[2 * i] = t2[0];
            proposal[2 * i + 1] = t2[1];
            let dev = t2 - mode;
            let log_q = -0.5 * dev.dot(&(prec * dev));
            logw[i] = model.log_conditional2(data, &theta1, t2.as_slice()) - log_q;
        }
        let p = DrawSet::from_rows(proposal.clone(), 2, 0, DrawLabel::Conditional)?;
        let pick = sir_resample(&p, &logw, 1, &mut rng)?;
        out.extend_from_slice(&theta1);
        out.extend_from_slice(pick.row(0));
    }
    Ok((DrawSet::from_rows(out, k, 2, DrawLabel::Cut)?, warnings))
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Full posterior by adaptive random-walk Metropolis on (logit θ₁, θ₂),
/// with the logit Jacobian θ(1−θ) included. Draws are returned on the
/// probability scale.
pub fn hpv_exact(data: &HpvData, budget: &Budget, seed: u64) -> Result<(DrawSet, ChainDiagnostics)> {
    let model = HpvModel::default();
    let k = data.len();
    let target = TargetDensity::new(k + 2, |x: &[f64]| {
        let (phi, t2) = x.split_at(k);
        let mut lp = -(t2[0] * t2[0] + t2[1] * t2[1]) / (2.0 * model.prior_var);
        for (r, &f) in data.rows.iter().zip(phi) {
            let (lp1, lq1) = (log_sigmoid(f), log_sigmoid(-f));
            let (x, n) = (r.x_hpv as f64, r.n_survey as f64);
            // Binomial kernel plus log Jacobian log θ + log(1 − θ).
            lp += (x + 1.0) * lp1 + (n - x + 1.0) * lq1;
            let p = lp1.exp();
            let eta = t2[0] + t2[1] * p;
            lp += r.y_cancer as f64 * eta - r.t_womanyears * eta.exp();
        }
        lp
    });
    let means = data.beta_means();
    let (mode, _) = conditional2_mode(
        data,
        &means,
        Vector2::new(
            (data.rows.iter().map(|r| r.y_cancer as f64 + 0.5).sum::<f64>() / data.rows.iter().map(|r| r.t_womanyears).sum::<f64>()).ln(),
            0.0,
        ),
        model.prior_var,
    )?;
    let mut init: Vec<f64> = means.iter().map(|&p| logit(p)).collect();
    init.extend_from_slice(mode.as_slice());
    let mut cfg = budget.config(seed, init);
    cfg.init_scale = Some(0.1);
    let (draws, diag) = adaptive_rwm(&target, &cfg, k, DrawLabel::Exact)?;
    let mut data_out = draws.as_slice().to_vec();
    for row in data_out.chunks_exact_mut(k + 2) {
        for v in &mut row[..k] {
            *v = log_sigmoid(*v).exp();
        }
    }
    Ok((DrawSet::from_rows(data_out, k, 2, DrawLabel::Exact)?, diag))
}

/// SMP for country `j` under the component loss on θ₁ⱼ: scalar weight
/// (σ²_cut,j − σ²_exact,j)/(θ̄_cut,j − θ̄_exact,j)², clamped to [0, 1].
pub fn hpv_smp_per_country(
    cut: &DrawSet,
    exact: &DrawSet,
    j: usize,
    omega_override: Option<f64>,
    n_out: usize,
    rng: &mut SmiRng,
) -> Result<SmpResult> {
    let k = cut.d1();
    if j >= k {
        return invalid(format!("country index {j} out of range for {k} countries"));
    }
    let weight = match omega_override {
        Some(w) => MixtureWeight::fixed(w)?,
        None => {
            let mut ups = DMatrix::zeros(k, k);
            ups[(j, j)] = 1.0;
            estimate_weight(&summarize(cut, Block::Theta1)?, &summarize(exact, Block::Theta1)?, &ups, NumeratorMode::Plain, None)?
        }
    };
    build_smp(cut, exact, &weight, n_out, rng)
}

#[derive(Debug, Clone)]
pub struct HpvFit {
    pub cut: DrawSet,
    pub exact: DrawSet,
    pub per_country: Vec<SmpResult>,
    pub diagnostics: ChainDiagnostics,
    pub warnings: Vec<String>,
}

impl HpvFit {
    pub fn omegas(&self) -> Vec<f64> {
        self.per_country.iter().map(|r| r.weight.omega_plus).collect()
    }
}

pub fn hpv_fit(data: &HpvData, cfg: &HpvConfig, seed: u64) -> Result<HpvFit> {
    let (cut, mut warnings) = hpv_cut(data, cfg, derive_seed(seed, &[1]))?;
    let (exact, diagnostics) = hpv_exact(data, &cfg.exact, derive_seed(seed, &[2]))?;
    warnings.extend(diagnostics.warnings.iter().cloned());
    let mut rng = rng_from_seed(derive_seed(seed, &[3]));
    let per_country = (0..data.len())
        .map(|j| hpv_smp_per_country(&cut, &exact, j, None, cfg.n_draws, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(HpvFit { cut, exact, per_country, diagnostics, warnings })
}

/// Generator for HPV-shaped data from the assumed model, optionally with
/// the Poisson rate of some countries multiplied by `exp(shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHpv {
    pub n_countries: usize,
    pub theta2: [f64; 2],
    pub prevalence: (f64, f64),
    pub survey_size: (u64, u64),
    pub womanyears: (f64, f64),
    /// (country index, log-rate shift)
    pub misspecified: Vec<(usize, f64)>,
}

impl Default for SyntheticHpv {
    fn default() -> Self {
        Self {
            n_countries: EXPECTED_COUNTRIES,
            theta2: [-1.5, 12.0],
            prevalence: (0.05, 0.25),
            survey_size: (300, 3000),
            womanyears: (20.0, 150.0),
            misspecified: Vec::new(),
        }
    }
}

impl SyntheticHpv {
    /// Returns the data and the true prevalences.
    pub fn generate(&self, seed: u64) -> Result<(HpvData, Vec<f64>)> {
        let mut rng = rng_from_seed(seed);
        let mut truth = Vec::with_capacity(self.n_countries);
        let mut rows = Vec::with_capacity(self.n_countries);
        for i in 0..self.n_countries {
            let p = rng.random_range(self.prevalence.0..self.prevalence.1);
            let n = rng.random_range(self.survey_size.0..=self.survey_size.1);
            let t = rng.random_range(self.womanyears.0..self.womanyears.1);
            let shift: f64 = self.misspecified.iter().filter(|(c, _)| *c == i).map(|(_, s)| s).sum();
            let mu = t * (self.theta2[0] + self.theta2[1] * p + shift).exp();
            let x = Binomial::new(n, p).map_err(|e| Error::InvalidInput(e.to_string()))?.sample(&mut rng);
            let y = Poisson::new(mu).map_err(|e| Error::InvalidInput(e.to_string()))?.sample(&mut rng) as u64;
            truth.push(p);
            rows.push(HpvRow { country: format!("C{:02}", i + 1), x_hpv: x, n_survey: n, y_cancer: y, t_womanyears: (t * 100.0).round() / 100.0 });
        }
        Ok((HpvData::new(rows)?, truth))
    }
}

/// Gaussian kernel density with Silverman's bandwidth, evaluated on `grid`.
pub fn kde(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let h = (1.06 * sd * n.powf(-0.2)).max(1e-12);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| values.iter().map(|&v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

/// Evenly spaced points covering every sample, padded by 10% of the range.
pub fn common_grid(samples: &[&[f64]], n: usize) -> Vec<f64> {
    let lo = samples.iter().flat_map(|s| s.iter()).copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().flat_map(|s| s.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
