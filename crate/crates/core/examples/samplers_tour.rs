// The sampler building blocks on a normal/inverse-gamma model: a two-block
// Gibbs sampler, conjugate updates, and SIR reweighting of its output.

use semimodular::posterior::{summarize, Block, DrawLabel};
use semimodular::rng::rng_from_seed;
use semimodular::samplers::{
    conjugate_inverse_gamma, conjugate_normal_mean, gibbs_compose, sample_inverse_gamma, sir_resample, GibbsBlock,
    McmcConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> semimodular::Result<()> {
    let mut rng = rng_from_seed(9);
    let ys: Vec<f64> = (0..200).map(|_| 2.0 + 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let n = ys.len();
    let ybar = ys.iter().sum::<f64>() / n as f64;

    // State (μ, σ²).
    let mut blocks = [
        GibbsBlock::new("mu", 0..1, |s: &[f64], r| {
            let (m, v) = conjugate_normal_mean(
                &DVector::from_element(1, 0.0),
                &DMatrix::from_element(1, 1, 100.0),
                &DVector::from_element(1, ybar),
                &DMatrix::from_element(1, 1, s[1] / n as f64),
            )
            .unwrap();
            vec![m[0] + v[(0, 0)].sqrt() * r.sample::<f64, _>(StandardNormal)]
        }),
        GibbsBlock::new("sigma2", 1..2, |s: &[f64], r| {
            let ss: f64 = ys.iter().map(|y| (y - s[0]).powi(2)).sum();
            let (a, b) = conjugate_inverse_gamma(0.0, 0.0, ss, n).unwrap();
            vec![sample_inverse_gamma(a, b, r).unwrap()]
        }),
    ];
    let cfg = McmcConfig::new(3_000, 500, 1, 4, vec![0.0, 1.0]);
    let draws = gibbs_compose(&mut blocks, &cfg, 1, DrawLabel::Exact)?;
    let s = summarize(&draws, Block::All)?;
    println!("Gibbs: mu {:.3} (sd {:.3}), sigma2 {:.3}", s.mean[0], s.sd(0), s.mean[1]);

    // Tilt the μ marginal by a N(2.5, 0.1²) likelihood via SIR.
    let logw: Vec<f64> = draws.rows().map(|r| -0.5 * ((r[0] - 2.5) / 0.1).powi(2)).collect();
    let tilted = sir_resample(&draws, &logw, 1000, &mut rng)?;
    println!("SIR-tilted mu mean {:.3}", summarize(&tilted, Block::Theta1)?.mean[0]);
    Ok(())
}
