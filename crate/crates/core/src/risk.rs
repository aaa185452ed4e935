//! Monte Carlo replication engine for the risk of cut, exact and SMP
//! point estimators.
//!
//! Replication `r` at grid index `i` draws all of its randomness from
//! `derive_seed(master_seed, [i, r])`. Replications run on a rayon pool, are
//! collected in index order, and are reduced sequentially, so the output
//! does not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::{evaluate_loss, LossSpec};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Cut,
    Exact,
    Smp,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Cut, Estimator::Exact, Estimator::Smp];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Cut => "cut",
            Estimator::Exact => "exact",
            Estimator::Smp => "smp",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cut" => Ok(Self::Cut),
            "exact" => Ok(Self::Exact),
            "smp" => Ok(Self::Smp),
            other => invalid(format!("unknown estimator `{other}`")),
        }
    }
}

/// θ₁ point estimates from one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimates {
    pub cut: Vec<f64>,
    pub exact: Vec<f64>,
    pub smp: Vec<f64>,
    pub omega_plus: f64,
}

impl PointEstimates {
    pub fn get(&self, e: Estimator) -> &[f64] {
        match e {
            Estimator::Cut => &self.cut,
            Estimator::Exact => &self.exact,
            Estimator::Smp => &self.smp,
        }
    }
}

/// A data-generating process plus the three estimators.
pub trait ReplicationModel: Sync {
    fn truth_theta1(&self) -> Vec<f64>;
    /// Total sample size n, used when risk is scaled by n.
    fn sample_size(&self) -> usize;
    /// Simulates one dataset at contamination `delta` and fits it. All
    /// randomness must come from `seed`.
    fn estimate(&self, delta: f64, seed: u64) -> Result<PointEstimates>;
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub model_id: String,
    pub grid: Vec<f64>,
    pub n_reps: usize,
    pub estimators: Vec<Estimator>,
    pub loss: LossSpec,
    /// ν; `f64::INFINITY` disables trimming.
    pub trim_nu: f64,
    pub scale_by_n: bool,
    pub master_seed: u64,
    /// Worker threads; 0 means rayon's default.
    pub threads: usize,
}

impl ExperimentPlan {
    pub fn new(model_id: impl Into<String>, grid: Vec<f64>, n_reps: usize, master_seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            grid,
            n_reps,
            estimators: Estimator::ALL.to_vec(),
            loss: LossSpec::squared_error(),
            trim_nu: f64::INFINITY,
            scale_by_n: false,
            master_seed,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return invalid("n_reps must be at least 1");
        }
        if self.grid.is_empty() {
            return invalid("contamination grid is empty");
        }
        if self.grid.iter().any(|d| !d.is_finite()) || self.grid.windows(2).any(|w| w[0] > w[1]) {
            return invalid("contamination grid must be finite and sorted");
        }
        if !(self.trim_nu > 0.0) {
            return invalid("trim_nu must be positive");
        }
        if self.estimators.is_empty() {
            return invalid("no estimators requested");
        }
        Ok(())
    }

    /// Applies scaling and trimming to a raw loss.
    pub fn transform(&self, q: f64, n: usize) -> f64 {
        let scaled = if self.scale_by_n { q * n as f64 } else { q };
        scaled.min(self.trim_nu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub delta: f64,
    pub estimator: Estimator,
    pub risk: f64,
    pub std_err: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationLosses {
    pub cut: f64,
    pub exact: f64,
    pub smp: f64,
    pub omega_plus: f64,
}

impl ReplicationLosses {
    pub fn get(&self, e: Estimator) -> f64 {
        match e {
            Estimator::Cut => self.cut,
            Estimator::Exact => self.exact,
            Estimator::Smp => self.smp,
        }
    }
}

/// One dataset, three estimators, raw losses q(β₀, ·).
pub fn run_replication<M: ReplicationModel + ?Sized>(
    model: &M,
    delta: f64,
    loss: &LossSpec,
    rep_seed: u64,
) -> Result<ReplicationLosses> {
    let est = model.estimate(delta, rep_seed)?;
    let truth = model.truth_theta1();
    Ok(ReplicationLosses {
        cut: evaluate_loss(loss, &truth, &est.cut)?,
        exact: evaluate_loss(loss, &truth, &est.exact)?,
        smp: evaluate_loss(loss, &truth, &est.smp)?,
        omega_plus: est.omega_plus,
    })
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub estimates: Vec<RiskEstimate>,
    /// Mean ω̂₊ per grid point over successful replications.
    pub mean_omega: Vec<f64>,
    pub failed: usize,
    pub total: usize,
}

impl PlanOutput {
    pub fn find(&self, delta: f64, e: Estimator) -> Option<&RiskEstimate> {
        self.estimates.iter().find(|r| r.estimator == e && (r.delta - delta).abs() < 1e-12)
    }
}

pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Risk of every requested estimator at every grid point.
///
/// Failed replications are dropped and counted; more than 1% failures is an
/// error, as is a grid point where every replication failed.
pub fn run_plan<M: ReplicationModel + ?Sized>(model: &M, plan: &ExperimentPlan) -> Result<PlanOutput> {
    plan.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..plan.grid.len()).flat_map(|i| (0..plan.n_reps).map(move |r| (i, r))).collect();
    let results: Vec<Result<ReplicationLosses>> = with_pool(plan.threads, || {
        jobs.par_iter()
            .map(|&(i, r)| {
                let seed = derive_seed(plan.master_seed, &[i as u64, r as u64]);
                run_replication(model, plan.grid[i], &plan.loss, seed)
            })
            .collect()
    })?;

    let n = model.sample_size();
    let total = results.len();
    let mut failed = 0;
    let mut estimates = Vec::new();
    let mut mean_omega = Vec::with_capacity(plan.grid.len());
    for (i, &delta) in plan.grid.iter().enumerate() {
        let cell = &results[i * plan.n_reps..(i + 1) * plan.n_reps];
        let ok: Vec<&ReplicationLosses> = cell
            .iter()
            .enumerate()
            .filter_map(|(r, res)| match res {
                Ok(l) => Some(l),
                Err(e) => {
                    log::warn!("{}: replication {r} at delta {delta} failed: {e}", plan.model_id);
                    None
                }
            })
            .collect();
        failed += cell.len() - ok.len();
        if ok.is_empty() {
            let estimator = plan.estimators.iter().map(|e| e.as_str()).collect::<Vec<_>>().join("+");
            return Err(Error::EmptyCell { delta, estimator });
        }
        mean_omega.push(ok.iter().map(|l| l.omega_plus).sum::<f64>() / ok.len() as f64);
        for &e in &plan.estimators {
            let xs: Vec<f64> = ok.iter().map(|l| plan.transform(l.get(e), n)).collect();
            let (risk, std_err) = mean_and_se(&xs);
            estimates.push(RiskEstimate { delta, estimator: e, risk, std_err, n_reps: xs.len() });
        }
    }
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    if failed > 0 {
        log::warn!("{}: {failed} of {total} replications failed and were excluded", plan.model_id);
    }
    Ok(PlanOutput { estimates, mean_omega, failed, total })
}

/// A model with local misspecification δₙ = δ₀ + ψ/√n built in.
pub trait LocalDriftModel: Sync {
    fn truth_theta1(&self) -> Vec<f64>;
    /// Simulates a dataset of total size `n` and fits it.
    fn estimate_at(&self, n: usize, seed: u64) -> Result<PointEstimates>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasProbeRow {
    pub n: usize,
    pub estimator: Estimator,
    /// Mean of √n(θ̄₁ − θ₁,₀), per coordinate.
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub reps: usize,
}

/// √n-scaled bias of the cut and exact estimators on a grid of sample sizes.
pub fn asymptotic_bias_probe<M: LocalDriftModel + ?Sized>(
    model: &M,
    n_grid: &[usize],
    reps: usize,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<BiasProbeRow>> {
    if reps < 2 || n_grid.is_empty() {
        return invalid("bias probe needs a nonempty n grid and at least 2 reps");
    }
    let truth = model.truth_theta1();
    let jobs: Vec<(usize, usize)> = (0..n_grid.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let results: Vec<Result<PointEstimates>> = with_pool(threads, || {
        jobs.par_iter()
            .map(|&(i, r)| model.estimate_at(n_grid[i], derive_seed(master_seed, &[i as u64, r as u64])))
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut failed = 0;
    for (i, &n) in n_grid.iter().enumerate() {
        let ok: Vec<&PointEstimates> =
            results[i * reps..(i + 1) * reps].iter().filter_map(|r| r.as_ref().ok()).collect();
        failed += reps - ok.len();
        if ok.len() < 2 {
            return Err(Error::EmptyCell { delta: n as f64, estimator: "cut+exact".into() });
        }
        let root_n = (n as f64).sqrt();
        for e in [Estimator::Cut, Estimator::Exact] {
            let (mut mean, mut std_err) = (Vec::new(), Vec::new());
            for (j, t) in truth.iter().enumerate() {
                let xs: Vec<f64> = ok.iter().map(|p| root_n * (p.get(e)[j] - t)).collect();
                let (m, se) = mean_and_se(&xs);
                mean.push(m);
                std_err.push(se);
            }
            rows.push(BiasProbeRow { n, estimator: e, mean, std_err, reps: ok.len() });
        }
    }
    if failed * 100 > jobs.len() {
        return Err(Error::TooManyFailures { failed, total: jobs.len() });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Offset(Vec<f64>);

    impl ReplicationModel for Offset {
        fn truth_theta1(&self) -> Vec<f64> {
            vec![1.0, -1.0]
        }
        fn sample_size(&self) -> usize {
            10
        }
        fn estimate(&self, _delta: f64, _seed: u64) -> Result<PointEstimates> {
            let est: Vec<f64> = self.truth_theta1().iter().zip(&self.0).map(|(t, c)| t + c).collect();
            Ok(PointEstimates { cut: est.clone(), exact: est.clone(), smp: est, omega_plus: 0.5 })
        }
    }

    #[test]
    fn truth_stub_has_zero_risk() {
        let plan = ExperimentPlan::new("stub", vec![0.1, 0.2], 5, 1);
        let out = run_plan(&Offset(vec![0.0, 0.0]), &plan).unwrap();
        assert_eq!(out.estimates.len(), 6);
        assert!(out.estimates.iter().all(|r| r.risk == 0.0 && r.std_err == 0.0));
    }

    #[test]
    fn constant_offset_gives_constant_loss() {
        let plan = ExperimentPlan::new("stub", vec![0.5], 7, 1);
        let out = run_plan(&Offset(vec![3.0, 4.0]), &plan).unwrap();
        for r in &out.estimates {
            assert_eq!((r.risk, r.std_err, r.n_reps), (25.0, 0.0, 7));
        }
        let single = run_plan(&Offset(vec![1.0, 0.0]), &ExperimentPlan::new("stub", vec![0.0], 1, 3)).unwrap();
        assert_eq!(single.estimates[0].risk, 1.0);
    }

    #[test]
    fn scaling_and_trimming() {
        let mut plan = ExperimentPlan::new("stub", vec![0.5], 3, 1);
        plan.scale_by_n = true;
        let out = run_plan(&Offset(vec![1.0, 0.0]), &plan).unwrap();
        assert_eq!(out.estimates[0].risk, 10.0);
        plan.trim_nu = 4.0;
        let out = run_plan(&Offset(vec![1.0, 0.0]), &plan).unwrap();
        assert_eq!(out.estimates[0].risk, 4.0);
    }

    struct Flaky {
        fail_every: u64,
    }

    impl ReplicationModel for Flaky {
        fn truth_theta1(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn sample_size(&self) -> usize {
            1
        }
        fn estimate(&self, _delta: f64, seed: u64) -> Result<PointEstimates> {
            if seed.is_multiple_of(self.fail_every) {
                return Err(Error::SamplerDivergence { block: "x".into(), iteration: 0 });
            }
            let v = (seed % 1000) as f64 / 1000.0;
            Ok(PointEstimates { cut: vec![v], exact: vec![v], smp: vec![v], omega_plus: 0.0 })
        }
    }

    #[test]
    fn failure_policy() {
        let plan = ExperimentPlan::new("flaky", vec![0.1], 400, 9);
        assert!(matches!(run_plan(&Flaky { fail_every: 2 }, &plan), Err(Error::EmptyCell { .. }) | Err(Error::TooManyFailures { .. })));
        let out = run_plan(&Flaky { fail_every: 1_000_000_007 }, &plan).unwrap();
        assert_eq!(out.failed, 0);
        let all_fail = run_plan(&Flaky { fail_every: 1 }, &plan);
        assert!(matches!(all_fail, Err(Error::EmptyCell { .. })));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let mut plan = ExperimentPlan::new("flaky", vec![0.1, 0.3, 0.7], 50, 11);
        plan.threads = 1;
        let a = run_plan(&Flaky { fail_every: u64::MAX }, &plan).unwrap();
        plan.threads = 4;
        let b = run_plan(&Flaky { fail_every: u64::MAX }, &plan).unwrap();
        assert_eq!(a.estimates, b.estimates);
    }

    #[test]
    fn invalid_plans() {
        let mut plan = ExperimentPlan::new("x", vec![0.2, 0.1], 1, 0);
        assert!(plan.validate().is_err());
        plan.grid = vec![];
        assert!(plan.validate().is_err());
        plan.grid = vec![0.1];
        plan.n_reps = 0;
        assert!(plan.validate().is_err());
    }

    proptest! {
        #[test]
        fn risk_is_nondecreasing_in_nu(
            losses in prop::collection::vec(0.0f64..100.0, 1..50),
            nu1 in 0.01f64..200.0,
            extra in 0.0f64..200.0,
        ) {
            let risk = |nu: f64| {
                let mut plan = ExperimentPlan::new("p", vec![0.0], 1, 0);
                plan.trim_nu = nu;
                losses.iter().map(|&q| plan.transform(q, 1)).sum::<f64>() / losses.len() as f64
            };
            prop_assert!(risk(nu1) <= risk(nu1 + extra));
        }
    }
}
