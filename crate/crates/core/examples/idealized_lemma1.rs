// Gaussian limit experiment: simulated risk of the shrinkage combination
// against its closed-form bound as the drift grows.

use semimodular::analysis::simulate_lemma1;

fn main() -> semimodular::Result<()> {
    let (d1, tau2, sigma2, gamma) = (5, 1.0, 0.5, 3.0);
    println!("eta_norm2  cut_risk  smp_risk  bound");
    for (i, e2) in [0.0, 1.0, 4.0, 16.0].into_iter().enumerate() {
        let mut eta = vec![0.0; d1 as usize];
        eta[0] = f64::sqrt(e2);
        let s = simulate_lemma1(d1, tau2, sigma2, &eta, gamma, 20_000, i as u64)?;
        println!("{e2:9.1}  {:8.4}  {:8.4}  {:6.4}", s.cut_risk, s.smp_risk, s.bound);
    }
    Ok(())
}
