//! `smi run`: the three simulation experiments and the Gaussian limit check.

use std::path::PathBuf;

use serde_json::json;

use super::config::{Experiment, LossChoice, RunConfig};
use super::output::{num, svg_line_chart, OutputDir, Series, Table};
use crate::analysis::simulate_lemma1;
use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;
use crate::models::biased_mean::BiasedMeanExperiment;
use crate::models::hpv::{common_grid, hpv_fit, hpv_load, kde, HpvConfig};
use crate::models::random_effects::RandomEffectsExperiment;
use crate::risk::{run_plan, Estimator, ExperimentPlan, PlanOutput};
use crate::rng::derive_seed;
use crate::samplers::Budget;

pub const SEED_RULE: &str = "replication seed = derive_seed(master_seed, [delta_index, rep]) with derive_seed a SplitMix64 chain; \
within a replication the data, cut and exact streams use derive_seed(seed, [0]), [1] and [2]";

pub const SMP_ALLOCATION: &str = "stratified: round(omega_plus * n_out) draws from the exact posterior, the rest from the cut posterior";

pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub meta: serde_json::Value,
}

/// Runs the configured experiment. On error every file written so far is
/// removed.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.experiment == Experiment::Hpv {
        match &cfg.data {
            None => return invalid("the hpv experiment needs a data file (`--data`)"),
            Some(p) if !p.is_file() => return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{}: no such file", p.display())))),
            _ => {}
        }
    }
    let hash = cfg.hash()?;
    let mut out = OutputDir::create(&cfg.out_dir, cfg.seed, &hash)?;
    let result = match cfg.experiment {
        Experiment::BiasedMean => run_biased_mean(cfg, &mut out),
        Experiment::RandomEffects => run_random_effects(cfg, &mut out),
        Experiment::Hpv => run_hpv(cfg, &mut out),
        Experiment::IdealizedGaussian => run_idealized(cfg, &mut out),
    };
    let details = match result {
        Ok(d) => d,
        Err(e) => {
            out.discard();
            return Err(e);
        }
    };
    let meta = json!({
        "experiment": cfg.experiment.as_str(),
        "master_seed": cfg.seed,
        "config_hash": hash,
        "config": serde_json::to_value(cfg)?,
        "seed_rule": SEED_RULE,
        "smp_allocation": SMP_ALLOCATION,
        "code_version": env!("CARGO_PKG_VERSION"),
        "details": details,
    });
    if let Err(e) = out.write_json("run_meta.json", &meta) {
        out.discard();
        return Err(e);
    }
    Ok(RunReport { files: out.written().to_vec(), meta })
}

fn budget(cfg: &RunConfig, default: Budget) -> Budget {
    Budget::new(
        cfg.mcmc_iter.unwrap_or(default.n_iter),
        cfg.mcmc_burn_in.unwrap_or(default.burn_in),
        cfg.mcmc_thin.unwrap_or(default.thin),
    )
}

/// `k` evenly spaced decimals `start + i·step`, computed from integers in
/// hundredths so every value prints exactly.
fn decimal_grid(start_hundredths: u32, step_hundredths: u32, k: u32) -> Vec<f64> {
    (0..k).map(|i| f64::from(start_hundredths + i * step_hundredths) / 100.0).collect()
}

fn loss_spec(choice: LossChoice, d1: usize) -> Result<LossSpec> {
    match choice {
        LossChoice::Squared => Ok(LossSpec::squared_error()),
        LossChoice::Component(j) if j < d1 => Ok(LossSpec::component(j)),
        LossChoice::Component(j) => invalid(format!("loss component {j} out of range for d1 = {d1}")),
    }
}

fn plan_for(cfg: &RunConfig, id: &str, default_grid: Vec<f64>, loss: LossSpec) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(id, cfg.grid.clone().unwrap_or(default_grid), cfg.reps.unwrap_or(1000), cfg.seed);
    plan.loss = loss;
    plan.trim_nu = cfg.trim_nu.unwrap_or(f64::INFINITY);
    plan.scale_by_n = cfg.scale_by_n;
    plan.threads = cfg.threads.unwrap_or(0);
    plan
}

fn risk_table(res: &PlanOutput) -> Table {
    let mut t = Table::new(["delta", "estimator", "risk", "std_err", "n_reps"]);
    for e in &res.estimates {
        t.push(vec![num(e.delta), e.estimator.to_string(), num(e.risk), num(e.std_err), e.n_reps.to_string()]);
    }
    t
}

fn risk_svg(title: &str, plan: &ExperimentPlan, res: &PlanOutput) -> String {
    let series: Vec<Series> = Estimator::ALL
        .iter()
        .map(|&e| Series {
            name: e.to_string(),
            points: plan.grid.iter().filter_map(|&d| res.find(d, e).map(|r| (d, r.risk))).collect(),
        })
        .collect();
    svg_line_chart(title, "delta", "risk", &series)
}

fn plan_details(plan: &ExperimentPlan, res: &PlanOutput) -> serde_json::Value {
    json!({
        "grid": plan.grid,
        "n_reps": plan.n_reps,
        "risk_rows": res.estimates.len(),
        "failed_replications": res.failed,
        "total_replications": res.total,
        "mean_omega_plus": res.mean_omega,
        "trim_nu": if plan.trim_nu.is_finite() { json!(plan.trim_nu) } else { json!("inf") },
        "scale_by_n": plan.scale_by_n,
    })
}

fn run_biased_mean(cfg: &RunConfig, out: &mut OutputDir) -> Result<serde_json::Value> {
    let d1 = cfg.d1.unwrap_or(1);
    let mut exp = BiasedMeanExperiment::new(d1);
    exp.n_cut_draws = cfg.n_cut_draws.unwrap_or(exp.n_cut_draws);
    exp.gibbs = budget(cfg, exp.gibbs);
    exp.mode = cfg.omega_mode.unwrap_or(exp.mode);
    let loss = loss_spec(cfg.loss.unwrap_or(LossChoice::Squared), d1)?;
    let plan = plan_for(cfg, "biased-mean", decimal_grid(10, 5, 17), loss);
    let res = run_plan(&exp, &plan)?;
    out.write_csv("risk.csv", &risk_table(&res))?;

    let mut fig = Table::new(["delta", "cut", "exact", "smp", "mean_omega_plus"]);
    for (i, &d) in plan.grid.iter().enumerate() {
        let r = |e| res.find(d, e).map_or(String::new(), |r| num(r.risk));
        fig.push(vec![num(d), r(Estimator::Cut), r(Estimator::Exact), r(Estimator::Smp), num(res.mean_omega[i])]);
    }
    out.write_csv(&format!("fig3_d{d1}.csv"), &fig)?;
    if cfg.svg {
        out.write_text("risk.svg", &risk_svg(&format!("biased mean, d1 = {d1}"), &plan, &res))?;
    }
    let mut details = plan_details(&plan, &res);
    details["d1"] = json!(d1);
    details["n1"] = json!(exp.model.n1);
    details["n2"] = json!(exp.model.n2);
    details["numerator_mode"] = json!(exp.mode);
    details["n_cut_draws"] = json!(exp.n_cut_draws);
    details["gibbs"] = json!(exp.gibbs);
    Ok(details)
}

fn run_random_effects(cfg: &RunConfig, out: &mut OutputDir) -> Result<serde_json::Value> {
    let mut exp = RandomEffectsExperiment::default();
    exp.model.paper_kernel = cfg.paper_kernel;
    exp.n_cut_draws = cfg.n_cut_draws.unwrap_or(exp.n_cut_draws);
    exp.gibbs = budget(cfg, exp.gibbs);
    exp.mode = cfg.omega_mode.unwrap_or(exp.mode);
    let loss = loss_spec(cfg.loss.unwrap_or(LossChoice::Component(0)), exp.model.n_groups)?;
    let plan = plan_for(cfg, "random-effects", decimal_grid(10, 20, 10), loss);
    let res = run_plan(&exp, &plan)?;
    out.write_csv("risk.csv", &risk_table(&res))?;

    let mut header = vec!["method".to_string()];
    header.extend(plan.grid.iter().map(|&d| num(d)));
    let mut table = Table::new(header);
    for (label, e) in [("Cut", Estimator::Cut), ("Exact", Estimator::Exact), ("SMP", Estimator::Smp)] {
        let mut row = vec![label.to_string()];
        row.extend(plan.grid.iter().map(|&d| res.find(d, e).map_or(String::new(), |r| num(100.0 * r.risk))));
        table.push(row);
    }
    out.write_csv("table1.csv", &table)?;
    if cfg.svg {
        out.write_text("risk.svg", &risk_svg("random effects", &plan, &res))?;
    }
    let mut details = plan_details(&plan, &res);
    details["table1_scale"] = json!(100);
    details["n_groups"] = json!(exp.model.n_groups);
    details["j"] = json!(exp.model.j);
    details["paper_kernel"] = json!(exp.model.paper_kernel);
    details["numerator_mode"] = json!(exp.mode);
    details["n_cut_draws"] = json!(exp.n_cut_draws);
    details["gibbs"] = json!(exp.gibbs);
    Ok(details)
}

fn run_hpv(cfg: &RunConfig, out: &mut OutputDir) -> Result<serde_json::Value> {
    let path = cfg.data.as_ref().expect("checked by cmd_run");
    let data = hpv_load(path)?;
    let default = HpvConfig::default();
    let hcfg = HpvConfig {
        n_draws: cfg.n_cut_draws.unwrap_or(default.n_draws),
        sir_proposals: default.sir_proposals,
        exact: budget(cfg, default.exact),
    };
    let fit = hpv_fit(&data, &hcfg, cfg.seed)?;
    let countries = data.countries();
    let selected: Vec<usize> = match cfg.loss {
        Some(LossChoice::Component(j)) if j >= data.len() => return invalid(format!("country index {j} out of range")),
        Some(LossChoice::Component(j)) => vec![j],
        _ => (0..data.len()).collect(),
    };

    let mut marg = Table::new(["country", "posterior", "grid_point", "density", "omega_plus"]);
    let mut weights = Table::new(["country", "gamma_hat", "location_gap", "omega_raw", "omega_plus"]);
    for &j in &selected {
        let r = &fit.per_country[j];
        let cut = fit.cut.column(j);
        let exact = fit.exact.column(j);
        let smp = r.smp_draws.column(j);
        let grid = common_grid(&[&cut, &exact, &smp], 101);
        for (label, xs) in [("cut", &cut), ("exact", &exact), ("smp", &smp)] {
            for (g, d) in grid.iter().zip(kde(xs, &grid)) {
                marg.push(vec![countries[j].clone(), label.into(), num(*g), num(d), num(r.weight.omega_plus)]);
            }
        }
        let w = &r.weight;
        weights.push(vec![countries[j].clone(), num(w.gamma_hat), num(w.location_gap), num(w.omega_raw), num(w.omega_plus)]);
    }
    out.write_csv("hpv_marginals.csv", &marg)?;
    out.write_csv("hpv_weights.csv", &weights)?;
    Ok(json!({
        "countries": countries,
        "n_draws": hcfg.n_draws,
        "sir_proposals": hcfg.sir_proposals,
        "exact_budget": hcfg.exact,
        "accept_rate": fit.diagnostics.accept_rate,
        "ess_min": fit.diagnostics.ess_min,
        "warnings": fit.warnings,
        "omega_plus": fit.omegas(),
    }))
}

fn run_idealized(cfg: &RunConfig, out: &mut OutputDir) -> Result<serde_json::Value> {
    let d1 = cfg.d1.unwrap_or(5);
    let d1u = u32::try_from(d1).map_err(|_| Error::InvalidInput("d1 too large".into()))?;
    let tau2 = cfg.tau2.unwrap_or(1.0);
    let sigma2 = cfg.sigma2.unwrap_or(0.5);
    let gamma = cfg.gamma.unwrap_or(d1.saturating_sub(2) as f64);
    let norms = cfg.eta_norm2.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let draws = cfg.draws.unwrap_or(1_000_000);

    let mut t = Table::new(["eta_norm2", "cut_risk", "cut_se", "smp_risk", "smp_se", "lemma1_bound", "mean_omega"]);
    for (i, &e2) in norms.iter().enumerate() {
        if !(e2 >= 0.0) {
            return invalid(format!("eta_norm2 must be nonnegative, got {e2}"));
        }
        let mut eta = vec![0.0; d1];
        eta[0] = e2.sqrt();
        let s = simulate_lemma1(d1u, tau2, sigma2, &eta, gamma, draws, derive_seed(cfg.seed, &[i as u64]))?;
        t.push(vec![num(e2), num(s.cut_risk), num(s.cut_se), num(s.smp_risk), num(s.smp_se), num(s.bound), num(s.mean_omega)]);
    }
    out.write_csv("lemma1.csv", &t)?;
    Ok(json!({ "d1": d1, "tau2": tau2, "sigma2": sigma2, "gamma": gamma, "draws": draws, "cut_risk_limit": d1 as f64 * tau2 }))
}

