//! Parameter blocks, posterior draw sets and their moment summaries.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A parameter point split into the shared block θ₁ and the module-2 block θ₂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSplit {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

impl ParamSplit {
    pub fn new(theta1: Vec<f64>, theta2: Vec<f64>) -> Result<Self> {
        if theta1.is_empty() {
            return invalid("theta1 must have at least one entry");
        }
        if theta1.iter().chain(&theta2).any(|v| !v.is_finite()) {
            return invalid("parameter entries must be finite");
        }
        Ok(Self { theta1, theta2 })
    }

    pub fn d1(&self) -> usize {
        self.theta1.len()
    }

    pub fn d2(&self) -> usize {
        self.theta2.len()
    }

    /// θ = (θ₁ᵀ, θ₂ᵀ)ᵀ
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.theta1.clone();
        v.extend_from_slice(&self.theta2);
        v
    }
}

/// Which posterior a draw set represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawLabel {
    Cut,
    Exact,
    Smp,
    Conditional,
}

impl fmt::Display for DrawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DrawLabel::Cut => "cut",
            DrawLabel::Exact => "exact",
            DrawLabel::Smp => "smp",
            DrawLabel::Conditional => "conditional",
        })
    }
}

/// Column block selector for [`summarize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Theta1,
    Theta2,
    All,
}

/// Posterior draws stored row-major: each row is one draw of (θ₁, θ₂).
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    data: Vec<f64>,
    n_rows: usize,
    d1: usize,
    d2: usize,
    label: DrawLabel,
}

impl DrawSet {
    /// Builds a draw set from row-major data, validating shape and finiteness.
    pub fn from_rows(data: Vec<f64>, d1: usize, d2: usize, label: DrawLabel) -> Result<Self> {
        let width = d1 + d2;
        if width == 0 {
            return invalid("draw set must have at least one column");
        }
        if !data.len().is_multiple_of(width) {
            return invalid(format!("{} values do not fill rows of width {width}", data.len()));
        }
        let n_rows = data.len() / width;
        if n_rows == 0 {
            return Err(Error::InsufficientDraws("draw set has no rows".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value in draw row {}", pos / width));
        }
        Ok(Self { data, n_rows, d1, d2, label })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn width(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn label(&self) -> DrawLabel {
        self.label
    }

    pub fn with_label(mut self, label: DrawLabel) -> Self {
        self.label = label;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn theta1(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.d1]
    }

    pub fn theta2(&self, i: usize) -> &[f64] {
        &self.row(i)[self.d1..]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.width())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Values of one column, in row order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Keeps only the θ₁ columns.
    pub fn theta1_only(&self) -> DrawSet {
        let data = self.rows().flat_map(|r| r[..self.d1].iter().copied()).collect();
        DrawSet { data, n_rows: self.n_rows, d1: self.d1, d2: 0, label: self.label }
    }

    fn block_range(&self, block: Block) -> Result<std::ops::Range<usize>> {
        match block {
            Block::Theta1 => Ok(0..self.d1),
            Block::Theta2 if self.d2 == 0 => invalid("draw set has no theta2 block"),
            Block::Theta2 => Ok(self.d1..self.width()),
            Block::All => Ok(0..self.width()),
        }
    }
}

/// Mean vector and covariance of one posterior block.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_draws: usize,
}

impl PosteriorSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks the symmetry / PSD / finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        let k = self.mean.len();
        if self.cov.nrows() != k || self.cov.ncols() != k {
            return invalid("summary covariance does not match mean length");
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return invalid("summary mean is not finite");
        }
        if !crate::linalg::is_symmetric(&self.cov, 1e-12) {
            return invalid("summary covariance is not symmetric");
        }
        let tr = self.cov.trace();
        let min_eig = self.cov.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * tr.abs().max(f64::MIN_POSITIVE) {
            return invalid(format!("summary covariance has eigenvalue {min_eig}"));
        }
        Ok(())
    }

    /// Standard deviation of coordinate `j`.
    pub fn sd(&self, j: usize) -> f64 {
        self.cov[(j, j)].max(0.0).sqrt()
    }
}

/// Column means and unbiased (S−1) covariance of a block, symmetrized.
pub fn summarize(draws: &DrawSet, block: Block) -> Result<PosteriorSummary> {
    let s = draws.n_rows();
    if s < 2 {
        return Err(Error::InsufficientData(format!("summarize needs at least 2 draws, got {s}")));
    }
    let range = draws.block_range(block)?;
    let k = range.len();

    let mut mean = DVector::zeros(k);
    for r in draws.rows() {
        for (m, v) in mean.iter_mut().zip(&r[range.clone()]) {
            *m += v;
        }
    }
    mean /= s as f64;

    let mut centered = DMatrix::zeros(s, k);
    for (i, r) in draws.rows().enumerate() {
        for (j, v) in r[range.clone()].iter().enumerate() {
            centered[(i, j)] = v - mean[j];
        }
    }
    let cov = centered.tr_mul(&centered) / (s as f64 - 1.0);
    let cov = crate::linalg::symmetrize(&cov);

    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return invalid("draws produced a non-finite summary");
    }
    Ok(PosteriorSummary { mean, cov, n_draws: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_sample() {
        let d = DrawSet::from_rows(vec![0.0, 0.0, 2.0, 2.0], 1, 1, DrawLabel::Cut).unwrap();
        let s = summarize(&d, Block::All).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.cov, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
        let s1 = summarize(&d, Block::Theta1).unwrap();
        assert_eq!(s1.mean.as_slice(), &[1.0]);
        assert_eq!(s1.cov[(0, 0)], 2.0);
    }

    #[test]
    fn identical_draws_have_zero_covariance() {
        let d = DrawSet::from_rows([1.5, -2.0, 3.0].repeat(5), 2, 1, DrawLabel::Exact).unwrap();
        for block in [Block::Theta1, Block::Theta2, Block::All] {
            let s = summarize(&d, block).unwrap();
            assert!(s.cov.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn standard_bivariate_normal_moments() {
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let data: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = DrawSet::from_rows(data, 2, 0, DrawLabel::Conditional).unwrap();
        let s = summarize(&d, Block::All).unwrap();
        let tol = 3.0 / (n as f64).sqrt();
        assert!(s.mean.iter().all(|m| m.abs() < tol), "mean {:?}", s.mean);
        let diff = &s.cov - DMatrix::<f64>::identity(2, 2);
        assert!(diff.amax() < 0.05);
    }

    #[test]
    fn errors_on_bad_inputs() {
        let one = DrawSet::from_rows(vec![1.0, 2.0], 1, 1, DrawLabel::Cut).unwrap();
        assert!(matches!(summarize(&one, Block::All), Err(Error::InsufficientData(_))));
        assert!(matches!(
            DrawSet::from_rows(vec![1.0, f64::NAN], 2, 0, DrawLabel::Cut),
            Err(Error::InvalidInput(_))
        ));
        let no_t2 = DrawSet::from_rows(vec![1.0, 2.0], 1, 0, DrawLabel::Cut).unwrap();
        assert!(summarize(&no_t2, Block::Theta2).is_err());
    }

    proptest! {
        #[test]
        fn summarize_is_row_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng_from_seed(seed));
            let flat2: Vec<f64> = shuffled.iter().flatten().copied().collect();
            let a = summarize(&DrawSet::from_rows(flat, 2, 1, DrawLabel::Cut).unwrap(), Block::All).unwrap();
            let b = summarize(&DrawSet::from_rows(flat2, 2, 1, DrawLabel::Cut).unwrap(), Block::All).unwrap();
            for (x, y) in a.mean.iter().zip(b.mean.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
            for (x, y) in a.cov.iter().zip(b.cov.iter()) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn summary_covariance_satisfies_its_invariants(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..40),
        ) {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let s = summarize(&DrawSet::from_rows(flat, 4, 0, DrawLabel::Exact).unwrap(), Block::All).unwrap();
            prop_assert!(s.validate().is_ok(), "{:?}", s.validate());
        }
    }

    #[test]
    fn param_split_accessors() {
        let p = ParamSplit::new(vec![1.0, 2.0], vec![3.0]).unwrap();
        assert_eq!((p.d1(), p.d2()), (2, 1));
        assert_eq!(p.concat(), vec![1.0, 2.0, 3.0]);
        assert!(ParamSplit::new(vec![], vec![1.0]).is_err());
        assert_relative_eq!(p.theta1[1], 2.0);
    }
}
