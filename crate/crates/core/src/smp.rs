//! Semi-modular posterior: the loss-aware mixing weight and mixture draws.
//!
//! The SMP for θ₁ is `(1 − ω) π_cut + ω π_exact`; θ₂ draws ride along with
//! their θ₁ rows, so the joint mixture shares the conditional π(θ₂ | θ₁, Z).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_square, quad_form, spectral_norm, trace};
use crate::posterior::{summarize, Block, DrawLabel, DrawSet, PosteriorSummary};
use crate::rng::SmiRng;

/// How the numerator γ̂ of the weight is formed from W = Υ(C_cut − C_exact).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumeratorMode {
    /// tr W − 2‖W‖
    #[default]
    Conservative,
    /// tr W
    Plain,
    /// W itself; one-dimensional only.
    Scalar,
    /// tr(Υ C_cut), the exact covariance dropped.
    PlainCutOnly,
}

impl fmt::Display for NumeratorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NumeratorMode::Conservative => "conservative",
            NumeratorMode::Plain => "plain",
            NumeratorMode::Scalar => "scalar",
            NumeratorMode::PlainCutOnly => "plain_cut_only",
        })
    }
}

impl FromStr for NumeratorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "conservative" => Ok(Self::Conservative),
            "plain" => Ok(Self::Plain),
            "scalar" => Ok(Self::Scalar),
            "plain_cut_only" => Ok(Self::PlainCutOnly),
            other => invalid(format!("unknown numerator mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeight {
    pub gamma_hat: f64,
    /// ΔᵀΥΔ with Δ = mean_cut − mean_exact.
    pub location_gap: f64,
    /// γ̂ / gap; ±inf when the gap is zero and γ̂ ≠ 0.
    pub omega_raw: f64,
    pub omega_plus: f64,
    pub numerator_mode: NumeratorMode,
}

impl MixtureWeight {
    /// A user-fixed weight; γ̂ and the gap are recorded as NaN.
    pub fn fixed(omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return invalid(format!("fixed omega {omega} outside [0, 1]"));
        }
        Ok(Self {
            gamma_hat: f64::NAN,
            location_gap: f64::NAN,
            omega_raw: omega,
            omega_plus: omega,
            numerator_mode: NumeratorMode::Plain,
        })
    }
}

pub fn estimate_gamma(
    upsilon: &DMatrix<f64>,
    cov_cut: &DMatrix<f64>,
    cov_exact: &DMatrix<f64>,
    mode: NumeratorMode,
) -> Result<f64> {
    let k = upsilon.nrows();
    check_square(upsilon, k, "curvature")?;
    check_square(cov_cut, k, "cut covariance")?;
    check_square(cov_exact, k, "exact covariance")?;
    Ok(match mode {
        NumeratorMode::PlainCutOnly => trace(&(upsilon * cov_cut)),
        NumeratorMode::Plain => trace(&(upsilon * (cov_cut - cov_exact))),
        NumeratorMode::Conservative => {
            let w = upsilon * (cov_cut - cov_exact);
            trace(&w) - 2.0 * spectral_norm(&w)?
        }
        NumeratorMode::Scalar => {
            if k != 1 {
                return invalid(format!("scalar numerator needs a 1x1 problem, got {k}x{k}"));
            }
            upsilon[(0, 0)] * (cov_cut[(0, 0)] - cov_exact[(0, 0)])
        }
    })
}

pub fn estimate_weight(
    cut: &PosteriorSummary,
    exact: &PosteriorSummary,
    upsilon: &DMatrix<f64>,
    mode: NumeratorMode,
    gamma_override: Option<f64>,
) -> Result<MixtureWeight> {
    if cut.dim() != exact.dim() {
        return invalid(format!("cut summary has dim {}, exact has {}", cut.dim(), exact.dim()));
    }
    check_square(upsilon, cut.dim(), "curvature")?;
    let gamma_hat = match gamma_override {
        Some(g) => g,
        None => estimate_gamma(upsilon, &cut.cov, &exact.cov, mode)?,
    };
    let delta = &cut.mean - &exact.mean;
    let location_gap = quad_form(upsilon, &delta).max(0.0);
    let (omega_raw, omega_plus) = if location_gap > 0.0 {
        let raw = gamma_hat / location_gap;
        (raw, raw.clamp(0.0, 1.0))
    } else if gamma_hat > 0.0 {
        (f64::INFINITY, 1.0)
    } else if gamma_hat < 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (0.0, 0.0)
    };
    Ok(MixtureWeight { gamma_hat, location_gap, omega_raw, omega_plus, numerator_mode: mode })
}

/// (1 − ω)·mean_cut + ω·mean_exact
pub fn smp_mean(cut: &PosteriorSummary, exact: &PosteriorSummary, omega_plus: f64) -> DVector<f64> {
    &cut.mean * (1.0 - omega_plus) + &exact.mean * omega_plus
}

#[derive(Debug, Clone)]
pub struct SmpResult {
    pub weight: MixtureWeight,
    pub smp_theta1_mean: DVector<f64>,
    pub smp_draws: DrawSet,
    pub cut_summary: PosteriorSummary,
    pub exact_summary: PosteriorSummary,
}

/// Stratified mixture: exactly `round(ω₊·n_out)` rows resampled from the
/// exact draws, the rest from the cut draws, then shuffled.
///
/// θ₂ columns are kept when both sources carry the same θ₂ width; otherwise
/// the output holds θ₁ only.
pub fn build_smp(
    cut: &DrawSet,
    exact: &DrawSet,
    weight: &MixtureWeight,
    n_out: usize,
    rng: &mut SmiRng,
) -> Result<SmpResult> {
    if n_out == 0 {
        return invalid("n_out must be positive");
    }
    if cut.d1() != exact.d1() {
        return invalid(format!("theta1 widths differ: cut {}, exact {}", cut.d1(), exact.d1()));
    }
    let omega = weight.omega_plus;
    if !(0.0..=1.0).contains(&omega) {
        return invalid(format!("omega_plus {omega} outside [0, 1]"));
    }
    let cut_summary = summarize(cut, Block::Theta1)?;
    let exact_summary = summarize(exact, Block::Theta1)?;

    let (cut, exact) = if cut.d2() == exact.d2() {
        (cut.clone(), exact.clone())
    } else {
        (cut.theta1_only(), exact.theta1_only())
    };
    let n_exact = (omega * n_out as f64).round() as usize;
    let n_cut = n_out - n_exact;

    let mut rows: Vec<&[f64]> = Vec::with_capacity(n_out);
    for (src, n) in [(&exact, n_exact), (&cut, n_cut)] {
        if n > 0 && src.n_rows() == 0 {
            return Err(Error::InsufficientDraws(format!("{} draws are empty", src.label())));
        }
        for _ in 0..n {
            rows.push(src.row(rng.random_range(0..src.n_rows())));
        }
    }
    rows.shuffle(rng);
    let data: Vec<f64> = rows.into_iter().flatten().copied().collect();
    let smp_draws = DrawSet::from_rows(data, cut.d1(), cut.d2(), DrawLabel::Smp)?;

    Ok(SmpResult {
        weight: *weight,
        smp_theta1_mean: smp_mean(&cut_summary, &exact_summary, omega),
        smp_draws,
        cut_summary,
        exact_summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    fn summary(mean: &[f64], cov: DMatrix<f64>) -> PosteriorSummary {
        PosteriorSummary { mean: DVector::from_column_slice(mean), cov, n_draws: 1000 }
    }

    fn eye(k: usize) -> DMatrix<f64> {
        DMatrix::identity(k, k)
    }

    #[test]
    fn gamma_examples() {
        let cc = DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.0, 0.5, 2.0, 0.1, 0.0, 0.1, 1.5]);
        let ce = eye(3) * 0.5;
        let ups = crate::linalg::spd_inverse(&(&cc - &ce), "gap").unwrap();
        let g = estimate_gamma(&ups, &cc, &ce, NumeratorMode::Conservative).unwrap();
        assert_relative_eq!(g, 1.0, epsilon = 1e-12);

        for mode in [NumeratorMode::Conservative, NumeratorMode::Plain] {
            assert_eq!(estimate_gamma(&eye(3), &cc, &cc, mode).unwrap(), 0.0);
        }

        let (u, c4, c1) = (eye(1), eye(1) * 4.0, eye(1));
        assert_eq!(estimate_gamma(&u, &c4, &c1, NumeratorMode::Conservative).unwrap(), -3.0);
        assert_eq!(estimate_gamma(&u, &c4, &c1, NumeratorMode::Plain).unwrap(), 3.0);
        assert_eq!(estimate_gamma(&u, &c4, &c1, NumeratorMode::Scalar).unwrap(), 3.0);
        assert!(estimate_gamma(&eye(2), &eye(2), &eye(2), NumeratorMode::Scalar).is_err());
        assert!(estimate_gamma(&eye(2), &eye(3), &eye(2), NumeratorMode::Plain).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = estimate_weight(
            &summary(&[1.0, 0.0, 0.0], eye(3) * 2.0),
            &summary(&[0.0, 0.0, 0.0], eye(3)),
            &eye(3),
            NumeratorMode::Conservative,
            None,
        )
        .unwrap();
        assert_eq!((w.gamma_hat, w.location_gap, w.omega_plus), (1.0, 1.0, 1.0));

        let w = estimate_weight(&summary(&[3.0], eye(1) * 4.0), &summary(&[0.0], eye(1)), &eye(1), NumeratorMode::Plain, None)
            .unwrap();
        assert_relative_eq!(w.omega_raw, 1.0 / 3.0);

        let w = estimate_weight(
            &summary(&[3.0], eye(1) * 4.0),
            &summary(&[0.0], eye(1)),
            &eye(1),
            NumeratorMode::Conservative,
            None,
        )
        .unwrap();
        assert!(w.gamma_hat < 0.0);
        assert_eq!(w.omega_plus, 0.0);

        // Cut-only preset: tr C_cut / ‖Δ‖².
        let w = estimate_weight(
            &summary(&[1.0, 1.0], eye(2) * 0.5),
            &summary(&[0.0, 0.0], eye(2) * 0.1),
            &eye(2),
            NumeratorMode::PlainCutOnly,
            None,
        )
        .unwrap();
        assert_relative_eq!(w.omega_raw, 0.5);
    }

    #[test]
    fn zero_gap_resolution() {
        let same = summary(&[1.0], eye(1));
        let w = estimate_weight(&summary(&[1.0], eye(1) * 2.0), &same, &eye(1), NumeratorMode::Plain, None).unwrap();
        assert_eq!(w.omega_plus, 1.0);
        let w = estimate_weight(&same, &summary(&[1.0], eye(1) * 2.0), &eye(1), NumeratorMode::Plain, None).unwrap();
        assert_eq!(w.omega_plus, 0.0);
        let w = estimate_weight(&same, &same, &eye(1), NumeratorMode::Plain, Some(0.5)).unwrap();
        assert_eq!((w.gamma_hat, w.omega_plus), (0.5, 1.0));
    }

    #[test]
    fn smp_mean_examples() {
        let a = summary(&[0.0, 0.0], eye(2));
        let b = summary(&[4.0, 8.0], eye(2));
        assert_eq!(smp_mean(&a, &b, 0.0), a.mean);
        assert_eq!(smp_mean(&a, &b, 1.0), b.mean);
        assert_eq!(smp_mean(&a, &b, 0.25).as_slice(), &[1.0, 2.0]);
    }

    fn tagged(value: f64, n: usize, label: DrawLabel) -> DrawSet {
        // θ₁ = value + small spread, θ₂ = tag.
        let data = (0..n).flat_map(|i| [value + i as f64 * 1e-3, value]).collect();
        DrawSet::from_rows(data, 1, 1, label).unwrap()
    }

    #[test]
    fn stratified_allocation() {
        let cut = tagged(0.0, 20, DrawLabel::Cut);
        let exact = tagged(10.0, 20, DrawLabel::Exact);
        let mut rng = rng_from_seed(1);
        for (omega, want_exact) in [(0.0, 0), (1.0, 10), (0.5, 5)] {
            let w = MixtureWeight::fixed(omega).unwrap();
            let r = build_smp(&cut, &exact, &w, 10, &mut rng).unwrap();
            let n_exact = r.smp_draws.rows().filter(|row| row[1] == 10.0).count();
            assert_eq!(n_exact, want_exact);
            assert_eq!(r.smp_draws.label(), DrawLabel::Smp);
            assert_eq!(r.smp_draws.width(), 2);
        }
        assert!(build_smp(&cut, &exact, &MixtureWeight::fixed(0.5).unwrap(), 0, &mut rng).is_err());
    }

    #[test]
    fn mismatched_theta2_falls_back_to_theta1() {
        let cut = tagged(0.0, 5, DrawLabel::Cut).theta1_only();
        let exact = tagged(1.0, 5, DrawLabel::Exact);
        let r = build_smp(&cut, &exact, &MixtureWeight::fixed(0.5).unwrap(), 8, &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.smp_draws.d2(), 0);
    }

    fn normal_draws(mu: f64, sd: f64, n: usize, seed: u64, label: DrawLabel) -> DrawSet {
        let mut rng = rng_from_seed(seed);
        let data = (0..n).map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        DrawSet::from_rows(data, 1, 0, label).unwrap()
    }

    #[test]
    fn mixture_marginal_and_mean() {
        let cut = normal_draws(0.0, 1.0, 20_000, 1, DrawLabel::Cut);
        let exact = normal_draws(2.0, 0.5, 20_000, 2, DrawLabel::Exact);
        let omega = 0.3;
        let n_out = 100_000;
        let r = build_smp(&cut, &exact, &MixtureWeight::fixed(omega).unwrap(), n_out, &mut rng_from_seed(3)).unwrap();

        let mut out = r.smp_draws.column(0);
        out.sort_by(f64::total_cmp);
        let (mut c, mut e) = (cut.column(0), exact.column(0));
        c.sort_by(f64::total_cmp);
        e.sort_by(f64::total_cmp);
        let ecdf = |v: &[f64], x: f64| v.partition_point(|&y| y <= x) as f64 / v.len() as f64;
        let ks = out
            .iter()
            .step_by(37)
            .map(|&x| (ecdf(&out, x) - ((1.0 - omega) * ecdf(&c, x) + omega * ecdf(&e, x))).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "ks {ks}");

        let m = out.iter().sum::<f64>() / n_out as f64;
        let var = out.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n_out as f64 - 1.0);
        assert!((m - r.smp_theta1_mean[0]).abs() < 4.0 * (var / n_out as f64).sqrt());
    }

    fn psd(entries: &[f64], k: usize) -> DMatrix<f64> {
        let m = DMatrix::from_column_slice(k, k, &entries[..k * k]);
        m.transpose() * &m
    }

    proptest! {
        #[test]
        fn weight_properties(
            a in prop::collection::vec(-2.0f64..2.0, 9),
            b in prop::collection::vec(-2.0f64..2.0, 9),
            u in prop::collection::vec(-2.0f64..2.0, 9),
            m1 in prop::collection::vec(-3.0f64..3.0, 3),
            m2 in prop::collection::vec(-3.0f64..3.0, 3),
            c in 0.01f64..100.0,
            mode_ix in 0usize..3,
        ) {
            let mode = [NumeratorMode::Conservative, NumeratorMode::Plain, NumeratorMode::PlainCutOnly][mode_ix];
            let ups = psd(&u, 3) + eye(3) * 1e-3;
            let cut = summary(&m1, psd(&a, 3));
            let exact = summary(&m2, psd(&b, 3));
            let w = estimate_weight(&cut, &exact, &ups, mode, None).unwrap();
            prop_assert!((0.0..=1.0).contains(&w.omega_plus));
            prop_assert!(w.location_gap >= 0.0);

            // Υ → cΥ
            let wc = estimate_weight(&cut, &exact, &(&ups * c), mode, None).unwrap();
            prop_assert!((wc.omega_raw - w.omega_raw).abs() <= 1e-8 * (1.0 + w.omega_raw.abs()));

            // covariances × c and gap × c (means scaled by √c about the exact mean)
            let s = c.sqrt();
            let cut_s = summary(
                &m1.iter().zip(&m2).map(|(x, y)| y + s * (x - y)).collect::<Vec<_>>(),
                &cut.cov * c,
            );
            let exact_s = summary(&m2, &exact.cov * c);
            let ws = estimate_weight(&cut_s, &exact_s, &ups, mode, None).unwrap();
            prop_assert!((ws.omega_raw - w.omega_raw).abs() <= 1e-8 * (1.0 + w.omega_raw.abs()));
        }
    }
}
