//! Kummer's confluent hypergeometric function and the inverse moment of a
//! noncentral chi-squared variable.

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};

const MAX_TERMS: usize = 100_000;
const REL_TOL: f64 = 1e-14;
/// Partial sums are rescaled above this magnitude to avoid overflow.
const RESCALE_AT: f64 = 1e250;

/// Natural log of ₁F₁(a; b; x) for x ≥ 0, where the Kummer series has
/// eventually-positive terms.
///
/// The series is summed with the term-ratio recurrence
/// `t_{k+1} = t_k (a+k) x / ((b+k)(k+1))` and stops when the next term is
/// below `1e-14` of the running sum and terms are decreasing.
pub fn ln_hypergeom_1f1(a: f64, b: f64, x: f64) -> Result<f64> {
    check_b(b)?;
    if !(x >= 0.0 && x.is_finite()) || !a.is_finite() {
        return invalid(format!("ln_hypergeom_1f1 needs finite a and x >= 0, got a = {a}, x = {x}"));
    }
    let (sum, log_scale) = kummer_series(a, b, x)?;
    if sum <= 0.0 {
        return Err(Error::Numeric(format!("1F1({a}; {b}; {x}) is not positive")));
    }
    Ok(sum.ln() + log_scale)
}

/// ₁F₁(a; b; x).
///
/// Negative `x` goes through Kummer's transformation
/// `₁F₁(a; b; x) = eˣ ₁F₁(b − a; b; −x)` so the summed series has
/// nonnegative argument.
pub fn hypergeom_1f1(a: f64, b: f64, x: f64) -> Result<f64> {
    check_b(b)?;
    if !(a.is_finite() && x.is_finite()) {
        return invalid("hypergeom_1f1 needs finite arguments");
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < 0.0 {
        let (sum, log_scale) = kummer_series(b - a, b, -x)?;
        return Ok(sum * (x + log_scale).exp());
    }
    let (sum, log_scale) = kummer_series(a, b, x)?;
    Ok(sum * log_scale.exp())
}

fn check_b(b: f64) -> Result<()> {
    if !b.is_finite() || b <= 0.0 && b == b.floor() {
        return invalid(format!("1F1 parameter b = {b} must not be a nonpositive integer"));
    }
    Ok(())
}

/// Returns `(s, L)` with ₁F₁ = s·e^L.
fn kummer_series(a: f64, b: f64, x: f64) -> Result<(f64, f64)> {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut log_scale = 0.0_f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        let ratio = (a + kf) * x / ((b + kf) * (kf + 1.0));
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return Ok((sum, log_scale));
        }
        if term.abs() < REL_TOL * sum.abs() && ratio.abs() < 1.0 {
            return Ok((sum, log_scale));
        }
        if sum.abs() > RESCALE_AT {
            sum /= RESCALE_AT;
            term /= RESCALE_AT;
            log_scale += RESCALE_AT.ln();
        }
    }
    Err(Error::Numeric(format!("1F1({a}; {b}; {x}) did not converge in {MAX_TERMS} terms")))
}

/// E[1/Z] for Z noncentral chi-squared with `kappa` degrees of freedom and
/// Poisson-mixture parameter `lambda` (half the usual noncentrality):
///
/// ½ Γ(κ/2 − 1)/Γ(κ/2) · e^{−λ} · ₁F₁(κ/2 − 1; κ/2; λ)
pub fn inv_noncentral_chisq_mean(kappa: f64, lambda: f64) -> Result<f64> {
    if !(kappa > 2.0) {
        return Err(Error::MomentDoesNotExist(format!(
            "E[1/Z] is infinite for {kappa} degrees of freedom (needs > 2)"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    let h = kappa / 2.0;
    let ln_f = ln_hypergeom_1f1(h - 1.0, h, lambda)?;
    Ok(0.5 * (ln_gamma(h - 1.0) - ln_gamma(h) - lambda + ln_f).exp())
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values from a 40-digit arbitrary-precision evaluation.
    const ORACLE: &[(f64, f64, f64, f64)] = &[
        (1.0, 2.0, 1.0, 1.718_281_828_459_045_2),
        (2.0, 3.0, 1.5, 2.880_750_697_928_028_8),
        (4.0, 5.0, 10.0, 6_643.184_483_713_705_7),
        (2.0, 5.0, 0.3, 1.129_539_391_975_168_1),
        (9.0, 10.0, 40.0, 43_976_486_618_872_025.821),
        (0.5, 1.5, 3.0, 4.222_211_992_888_511_9),
        (3.0, 4.0, 100.0, 7.904_677_267_224_527_9e41),
        (1.5, 2.5, -2.0, 0.347_106_542_568_518_557),
        (2.0, 3.0, -50.0, 0.000_8),
        (19.0, 20.0, 25.0, 31_500_991_013.067_092_8),
        (0.5, 3.0, 600.0, 4.838_089_402_313_636_6e253),
    ];

    #[test]
    fn matches_high_precision_oracle() {
        for &(a, b, x, want) in ORACLE {
            let got = hypergeom_1f1(a, b, x).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-10);
            if x > 0.0 {
                assert_relative_eq!(ln_hypergeom_1f1(a, b, x).unwrap(), want.ln(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_identities() {
        assert_eq!(hypergeom_1f1(3.3, 1.7, 0.0).unwrap(), 1.0);
        // 1F1(a; a; x) = e^x
        assert_relative_eq!(hypergeom_1f1(2.5, 2.5, 3.0).unwrap(), 3f64.exp(), max_relative = 1e-13);
        // 1F1(1; 2; x) = (e^x - 1)/x
        for x in [0.1, 2.0, 35.0] {
            assert_relative_eq!(hypergeom_1f1(1.0, 2.0, x).unwrap(), x.exp_m1() / x, max_relative = 1e-12);
        }
    }

    #[test]
    fn ln_form_survives_overflow() {
        // 1F1(1; 2; x) = (e^x - 1)/x, far beyond f64 range.
        let x = 2000.0;
        assert_relative_eq!(ln_hypergeom_1f1(1.0, 2.0, x).unwrap(), x - x.ln(), max_relative = 1e-12);
    }

    #[test]
    fn invalid_b_is_rejected() {
        assert!(hypergeom_1f1(1.0, 0.0, 1.0).is_err());
        assert!(hypergeom_1f1(1.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn inverse_moment_values() {
        for kappa in [3.0, 6.0, 11.0] {
            assert_relative_eq!(inv_noncentral_chisq_mean(kappa, 0.0).unwrap(), 1.0 / (kappa - 2.0), max_relative = 1e-13);
        }
        assert_relative_eq!(inv_noncentral_chisq_mean(6.0, 2.0).unwrap(), 0.141_916_910_404_576_586, max_relative = 1e-12);
        assert_relative_eq!(inv_noncentral_chisq_mean(10.0, 5.0).unwrap(), 0.059_232_342_145_595_610, max_relative = 1e-12);
        assert!(matches!(inv_noncentral_chisq_mean(2.0, 1.0), Err(Error::MomentDoesNotExist(_))));
        assert!(inv_noncentral_chisq_mean(5.0, -1.0).is_err());
    }

    #[test]
    fn inverse_moment_decreases_in_lambda() {
        for kappa in [3.0, 5.0, 10.0] {
            let vals: Vec<f64> = (0..60).map(|i| inv_noncentral_chisq_mean(kappa, i as f64 * 0.5).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "kappa {kappa}");
        }
        // Large lambda: E[1/Z] ~ 1/(2 lambda).
        let l = 5_000.0;
        assert_relative_eq!(inv_noncentral_chisq_mean(6.0, l).unwrap() * 2.0 * l, 1.0, max_relative = 2e-3);
    }
}
