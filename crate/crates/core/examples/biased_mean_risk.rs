// Monte Carlo risk of the cut, exact and semi-modular posterior means in
// the contaminated biased-mean model.

use semimodular::models::biased_mean::BiasedMeanExperiment;
use semimodular::risk::{run_plan, Estimator, ExperimentPlan};
use semimodular::samplers::Budget;

fn main() -> semimodular::Result<()> {
    let mut exp = BiasedMeanExperiment::new(1);
    exp.n_cut_draws = 500;
    exp.gibbs = Budget::new(700, 200, 1);
    let plan = ExperimentPlan::new("biased-mean", vec![0.1, 0.5, 0.9], 40, 7);
    let out = run_plan(&exp, &plan)?;
    println!("delta   cut      exact    smp      mean omega");
    for (i, &d) in plan.grid.iter().enumerate() {
        let r = |e| out.find(d, e).map_or(f64::NAN, |r| r.risk);
        println!(
            "{d:.1}  {:.5}  {:.5}  {:.5}  {:.3}",
            r(Estimator::Cut),
            r(Estimator::Exact),
            r(Estimator::Smp),
            out.mean_omega[i]
        );
    }
    Ok(())
}
