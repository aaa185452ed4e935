// Oracle mixing weight, asymptotic risk curve and the shrinkage bounds.

use nalgebra::{DMatrix, DVector};
use semimodular::analysis::{
    corollary2_risk_gap, golden_section_min, hypergeom_1f1, inv_noncentral_chisq_mean, lemma1_bound, omega_star,
    risk_curve, risk_quadratic, AsymptoticSpec,
};

fn main() -> semimodular::Result<()> {
    // Cut variance 2I, exact variance I, drift b = (1, 0, 0).
    let eye = DMatrix::<f64>::identity(3, 3);
    let spec = AsymptoticSpec::new(&eye * 0.5, eye.clone(), DVector::from_vec(vec![1.0, 0.0, 0.0]), eye)?;
    let w = omega_star(&spec)?;
    let numeric = golden_section_min(|x| risk_quadratic(&spec, x).unwrap(), 0.0, 1.0, 1e-10);
    println!("omega* = {w:.6} (numeric minimizer {numeric:.6})");
    for (omega, r) in risk_curve(&spec, 5)? {
        println!("  R0({omega:.2}) = {r:.4}");
    }

    println!("1F1(1; 2; 1) = {:.12}", hypergeom_1f1(1.0, 2.0, 1.0)?);
    println!("E[1/chi2_6(2)] = {:.12}", inv_noncentral_chisq_mean(6.0, 2.0)?);
    println!("risk gap, d1 = 4, gamma = 2, lambda = 0: {:.6}", corollary2_risk_gap(2.0, 4, 0.0)?);
    println!("Lemma 1 bound, d1 = 3: {:.6}", lemma1_bound(3, 1.0, 1.0, 0.0, 1.0)?);
    Ok(())
}
