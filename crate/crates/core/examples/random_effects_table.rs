// Risk (×100) for the first group's residual scale in the normal random
// effects model when that group's mean conflicts with the population.

use semimodular::loss::LossSpec;
use semimodular::models::random_effects::RandomEffectsExperiment;
use semimodular::risk::{run_plan, Estimator, ExperimentPlan};
use semimodular::samplers::Budget;

fn main() -> semimodular::Result<()> {
    let mut exp = RandomEffectsExperiment::default();
    exp.model.n_groups = 30;
    exp.n_cut_draws = 300;
    exp.gibbs = Budget::new(400, 100, 1);
    let mut plan = ExperimentPlan::new("random-effects", vec![0.1, 1.9], 8, 3);
    plan.loss = LossSpec::component(0);
    let out = run_plan(&exp, &plan)?;
    for e in Estimator::ALL {
        let row: Vec<String> = plan.grid.iter().map(|&d| format!("{:.3}", 100.0 * out.find(d, e).unwrap().risk)).collect();
        println!("{:<6} {}", e.to_string(), row.join("  "));
    }
    Ok(())
}
