// A user-defined two-module model: module 1 measures θ₁ directly, module 2
// is a biased second instrument with unknown log noise scale θ₂. The cut
// posterior is sampled by random-walk Metropolis plus SIR for θ₂ | θ₁, the
// full posterior by adaptive random-walk Metropolis.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use semimodular::models::TwoModuleModel;
use semimodular::posterior::{summarize, Block, DrawLabel, DrawSet, ParamSplit};
use semimodular::rng::rng_from_seed;
use semimodular::samplers::{adaptive_rwm, sir_resample, McmcConfig, TargetDensity};
use semimodular::smp::{build_smp, estimate_weight, NumeratorMode};

struct TwoInstruments;

struct Obs {
    y1: Vec<f64>,
    y2: Vec<f64>,
}

fn normal_ll(ys: &[f64], mean: f64, log_sd: f64) -> f64 {
    let v = (2.0 * log_sd).exp();
    ys.iter().map(|y| -0.5 * (y - mean).powi(2) / v - log_sd).sum()
}

impl TwoModuleModel for TwoInstruments {
    type Data = Obs;

    fn dims(&self, _: &Obs) -> (usize, usize) {
        (1, 1)
    }
    fn log_f1(&self, d: &Obs, t1: &[f64]) -> f64 {
        normal_ll(&d.y1, t1[0], 0.0)
    }
    fn log_f2(&self, d: &Obs, t1: &[f64], t2: &[f64]) -> f64 {
        normal_ll(&d.y2, t1[0], t2[0])
    }
    fn log_prior1(&self, t1: &[f64]) -> f64 {
        -0.5 * t1[0] * t1[0] / 100.0
    }
    fn log_prior2(&self, t2: &[f64], _: &[f64]) -> f64 {
        -0.5 * t2[0] * t2[0]
    }
    fn truth(&self, _: &Obs) -> ParamSplit {
        ParamSplit { theta1: vec![1.0], theta2: vec![0.0] }
    }
}

fn main() -> semimodular::Result<()> {
    let mut rng = rng_from_seed(1);
    let data = Obs {
        y1: (0..50).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect(),
        // Second instrument reads 0.4 too high.
        y2: (0..400).map(|_| 1.4 + rng.sample::<f64, _>(StandardNormal)).collect(),
    };
    let model = TwoInstruments;

    let cut_target = TargetDensity::new(1, |t: &[f64]| model.log_cut_kernel(&data, t));
    let cfg = McmcConfig::new(6_000, 2_000, 4, 2, vec![0.0]);
    let (theta1, _) = adaptive_rwm(&cut_target, &cfg, 1, DrawLabel::Cut)?;

    // θ₂ | θ₁ by SIR from a N(0, 1) proposal.
    let mut cut_rows = Vec::new();
    for t1 in theta1.rows() {
        let props: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
        let logw: Vec<f64> = props.iter().map(|&t2| model.log_conditional2(&data, t1, &[t2]) + 0.5 * t2 * t2).collect();
        let pick = sir_resample(&DrawSet::from_rows(props, 1, 0, DrawLabel::Conditional)?, &logw, 1, &mut rng)?;
        cut_rows.extend_from_slice(&[t1[0], pick.row(0)[0]]);
    }
    let cut = DrawSet::from_rows(cut_rows, 1, 1, DrawLabel::Cut)?;

    let joint = TargetDensity::new(2, |t: &[f64]| model.log_joint(&data, &t[..1], &t[1..]));
    let cfg = McmcConfig::new(12_000, 4_000, 8, 3, vec![0.0, 0.0]);
    let (exact, diag) = adaptive_rwm(&joint, &cfg, 1, DrawLabel::Exact)?;

    let cs = summarize(&cut, Block::Theta1)?;
    let es = summarize(&exact, Block::Theta1)?;
    let w = estimate_weight(&cs, &es, &DMatrix::identity(1, 1), NumeratorMode::Scalar, None)?;
    let smp = build_smp(&cut, &exact, &w, 1000, &mut rng)?;
    println!("exact chain acceptance {:.2}", diag.accept_rate);
    println!("cut mean {:.3}, exact mean {:.3}", cs.mean[0], es.mean[0]);
    println!("gamma {:.2e}, gap {:.2e}, omega+ {:.3}", w.gamma_hat, w.location_gap, w.omega_plus);
    println!("smp mean {:.3} from {} draws", smp.smp_theta1_mean[0], smp.smp_draws.n_rows());
    Ok(())
}
