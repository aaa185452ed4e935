//! `smi fit`: cut, exact and semi-modular posteriors for one dataset of a
//! built-in model family.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::LossChoice;
use super::output::{num, OutputDir, Table};
use crate::error::{invalid, Error, Result};
use crate::models::biased_mean::{biased_mean_cut, biased_mean_exact, BiasedMeanData};
use crate::models::hpv::{hpv_cut, hpv_exact, hpv_load, HpvConfig};
use crate::models::random_effects::{random_effects_cut_joint, random_effects_exact, RandomEffects, RandomEffectsData};
use crate::posterior::{summarize, Block, DrawSet, PosteriorSummary};
use crate::rng::{derive_seed, rng_from_seed};
use crate::samplers::Budget;
use crate::smp::{build_smp, estimate_weight, MixtureWeight, NumeratorMode, SmpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BiasedMean,
    RandomEffects,
    Hpv,
}

impl Family {
    /// Numerator used by each family's original experiment.
    pub fn default_mode(self) -> NumeratorMode {
        match self {
            Family::BiasedMean => NumeratorMode::PlainCutOnly,
            Family::RandomEffects => NumeratorMode::Conservative,
            Family::Hpv => NumeratorMode::Plain,
        }
    }
}

/// Declarative model file (flat TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_thin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sir_proposals: Option<usize>,
    #[serde(default)]
    pub paper_kernel: bool,
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn budget(&self, default: Budget) -> Budget {
        Budget::new(
            self.mcmc_iter.unwrap_or(default.n_iter),
            self.mcmc_burn_in.unwrap_or(default.burn_in),
            self.mcmc_thin.unwrap_or(default.thin),
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub loss: Option<LossChoice>,
    pub omega: Option<f64>,
    pub omega_mode: Option<NumeratorMode>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub struct FitReport {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), row, message: message.into() }
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

/// CSV with header `sample,y1,…,yd`; `sample` is 1 or 2.
pub fn load_biased_mean(path: &Path) -> Result<BiasedMeanData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    let d = header.len().saturating_sub(1);
    if d == 0 || &header[0] != "sample" {
        return Err(parse_err(path, 1, "expected header `sample,y1,...,yd`"));
    }
    let (mut y1, mut y2) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let vals = (1..=d)
            .map(|k| rec[k].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| parse_err(path, line, format!("`{}` is not a finite number", &rec[k]))))
            .collect::<Result<Vec<f64>>>()?;
        match &rec[0] {
            "1" => y1.extend(vals),
            "2" => y2.extend(vals),
            s => return Err(parse_err(path, line, format!("sample must be 1 or 2, got `{s}`"))),
        }
    }
    let rows = |v: &Vec<f64>| DMatrix::from_row_slice(v.len() / d, d, v);
    BiasedMeanData::new(rows(&y1), rows(&y2))
}

/// CSV with header `group,z`, one observation per line, equal group sizes.
pub fn load_random_effects(path: &Path) -> Result<RandomEffectsData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["group", "z"] {
        return Err(parse_err(path, 1, "expected header `group,z`"));
    }
    let mut names: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let z: f64 = rec[1].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| parse_err(path, line, format!("`{}` is not a finite number", &rec[1])))?;
        match names.iter().position(|n| n == &rec[0]) {
            Some(k) => groups[k].push(z),
            None => {
                names.push(rec[0].to_string());
                groups.push(vec![z]);
            }
        }
    }
    RandomEffectsData::from_groups(&groups)
}

fn curvature(d1: usize, loss: LossChoice) -> Result<DMatrix<f64>> {
    match loss {
        LossChoice::Squared => Ok(DMatrix::identity(d1, d1)),
        LossChoice::Component(j) if j < d1 => {
            let mut u = DMatrix::zeros(d1, d1);
            u[(j, j)] = 1.0;
            Ok(u)
        }
        LossChoice::Component(j) => invalid(format!("loss component {j} out of range for d1 = {d1}")),
    }
}

fn conservative_warning(rank: usize) -> String {
    format!(
        "conservative numerator tr W - 2||W|| cannot be positive when the loss curvature has rank {rank} <= 2; \
         omega_plus = 0 selects the cut posterior (use --omega-mode plain for a data-driven positive weight)"
    )
}

fn weight_for(
    cs: &PosteriorSummary,
    es: &PosteriorSummary,
    ups: &DMatrix<f64>,
    rank: usize,
    mode: NumeratorMode,
    omega: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<MixtureWeight> {
    if let Some(w) = omega {
        return MixtureWeight::fixed(w);
    }
    if mode == NumeratorMode::Conservative && rank <= 2 {
        let msg = conservative_warning(rank);
        log::warn!("{msg}");
        if !warnings.contains(&msg) {
            warnings.push(msg);
        }
    }
    estimate_weight(cs, es, ups, mode, None)
}

fn summary_json(s: &PosteriorSummary) -> serde_json::Value {
    let sd: Vec<f64> = (0..s.dim()).map(|j| s.sd(j)).collect();
    let mut v = json!({ "mean": s.mean.as_slice(), "sd": sd, "n_draws": s.n_draws });
    if s.dim() <= 10 {
        let rows: Vec<Vec<f64>> = (0..s.dim()).map(|i| s.cov.row(i).iter().copied().collect()).collect();
        v["cov"] = json!(rows);
    }
    v
}

fn weight_json(w: &MixtureWeight) -> serde_json::Value {
    let f = |x: f64| if x.is_finite() { json!(x) } else if x.is_nan() { serde_json::Value::Null } else { json!(if x > 0.0 { "inf" } else { "-inf" }) };
    json!({
        "gamma_hat": f(w.gamma_hat),
        "location_gap": f(w.location_gap),
        "omega_raw": f(w.omega_raw),
        "omega_plus": w.omega_plus,
        "numerator_mode": w.numerator_mode,
    })
}

fn draws_table(d: &DrawSet) -> Table {
    let mut header = vec!["draw".to_string()];
    header.extend((1..=d.d1()).map(|k| format!("theta1_{k}")));
    header.extend((1..=d.d2()).map(|k| format!("theta2_{k}")));
    let mut t = Table::new(header);
    for (i, row) in d.rows().enumerate() {
        let mut r = vec![i.to_string()];
        r.extend(row.iter().map(|&x| num(x)));
        t.push(r);
    }
    t
}

fn fit_hash(spec: &ModelSpec, opts: &FitOptions, data: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?.as_bytes());
    h.update(format!("loss={:?};omega={:?};mode={:?};seed={}", opts.loss, opts.omega, opts.omega_mode, opts.seed).as_bytes());
    h.update(std::fs::read(data)?);
    Ok(hex::encode(h.finalize()))
}

pub fn cmd_fit(model_path: &Path, data_path: &Path, opts: &FitOptions) -> Result<FitReport> {
    let spec = ModelSpec::load(model_path)?;
    if let Some(w) = opts.omega {
        if !(0.0..=1.0).contains(&w) {
            return invalid(format!("--omega {w} outside [0, 1]"));
        }
    }
    let hash = fit_hash(&spec, opts, data_path)?;
    let mut out = OutputDir::create(&opts.out_dir, opts.seed, &hash)?;
    match fit_into(&spec, data_path, opts, &hash, &mut out) {
        Ok(summary) => Ok(FitReport { files: out.written().to_vec(), summary }),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn fit_into(spec: &ModelSpec, data_path: &Path, opts: &FitOptions, hash: &str, out: &mut OutputDir) -> Result<serde_json::Value> {
    let mode = opts.omega_mode.unwrap_or(spec.family.default_mode());
    let mut warnings = Vec::new();
    let n_draws = spec.n_draws.unwrap_or(1000);
    let mut rng = rng_from_seed(derive_seed(opts.seed, &[3]));

    let mut summary = json!({
        "family": spec.family,
        "master_seed": opts.seed,
        "config_hash": hash,
        "numerator_mode": mode,
        "omega_override": opts.omega,
        "smp_allocation": super::run::SMP_ALLOCATION,
        "code_version": env!("CARGO_PKG_VERSION"),
    });

    if spec.family == Family::Hpv {
        let data = hpv_load(data_path)?;
        let default = HpvConfig::default();
        let hcfg = HpvConfig {
            n_draws,
            sir_proposals: spec.sir_proposals.unwrap_or(default.sir_proposals),
            exact: spec.budget(default.exact),
        };
        let (cut, w) = hpv_cut(&data, &hcfg, derive_seed(opts.seed, &[1]))?;
        warnings.extend(w);
        let (exact, diag) = hpv_exact(&data, &hcfg.exact, derive_seed(opts.seed, &[2]))?;
        warnings.extend(diag.warnings.iter().cloned());
        let cs = summarize(&cut, Block::Theta1)?;
        let es = summarize(&exact, Block::Theta1)?;
        let selected: Vec<usize> = match opts.loss {
            Some(LossChoice::Component(j)) if j >= data.len() => return invalid(format!("country index {j} out of range for {} countries", data.len())),
            Some(LossChoice::Component(j)) => vec![j],
            _ => (0..data.len()).collect(),
        };
        let names = data.countries();
        let mut per = Vec::new();
        let mut draws = Table::new(["country", "draw", "theta1"]);
        for &j in &selected {
            let ups = curvature(data.len(), LossChoice::Component(j))?;
            let weight = weight_for(&cs, &es, &ups, 1, mode, opts.omega, &mut warnings)?;
            let r = build_smp(&cut, &exact, &weight, n_draws, &mut rng)?;
            for (i, v) in r.smp_draws.column(j).iter().enumerate() {
                draws.push(vec![names[j].clone(), i.to_string(), num(*v)]);
            }
            per.push(json!({
                "country": names[j],
                "index": j,
                "cut_mean": cs.mean[j],
                "cut_sd": cs.sd(j),
                "exact_mean": es.mean[j],
                "exact_sd": es.sd(j),
                "smp_mean": r.smp_theta1_mean[j],
                "weight": weight_json(&r.weight),
            }));
        }
        out.write_csv("draws.csv", &draws)?;
        summary["countries"] = json!(per);
        summary["omega_plus"] = json!(per.iter().map(|p| p["weight"]["omega_plus"].clone()).collect::<Vec<_>>());
        summary["accept_rate"] = json!(diag.accept_rate);
        summary["ess_min"] = json!(diag.ess_min);
    } else {
        let (cut, exact) = match spec.family {
            Family::BiasedMean => {
                let data = load_biased_mean(data_path)?;
                let cut = biased_mean_cut(&data, n_draws, &mut rng_from_seed(derive_seed(opts.seed, &[1])))?;
                let exact = biased_mean_exact(&data, &spec.budget(Budget::new(n_draws + 500, 500, 1)), derive_seed(opts.seed, &[2]), None)?;
                (cut, exact)
            }
            Family::RandomEffects => {
                let data = load_random_effects(data_path)?;
                let model = RandomEffects { paper_kernel: spec.paper_kernel, n_groups: data.n_groups(), j: data.j, ..RandomEffects::default() };
                let cut = random_effects_cut_joint(&model, &data, n_draws, 5, derive_seed(opts.seed, &[1]))?;
                let exact = random_effects_exact(&data, &spec.budget(Budget::new(n_draws + 200, 200, 1)), derive_seed(opts.seed, &[2]))?;
                (cut, exact)
            }
            Family::Hpv => unreachable!(),
        };
        let d1 = cut.d1();
        let loss = opts.loss.unwrap_or(LossChoice::Squared);
        let ups = curvature(d1, loss)?;
        let rank = if matches!(loss, LossChoice::Component(_)) { 1 } else { d1 };
        let cs = summarize(&cut, Block::Theta1)?;
        let es = summarize(&exact, Block::Theta1)?;
        let weight = weight_for(&cs, &es, &ups, rank, mode, opts.omega, &mut warnings)?;
        let r: SmpResult = build_smp(&cut, &exact, &weight, n_draws, &mut rng)?;
        out.write_csv("draws.csv", &draws_table(&r.smp_draws))?;
        summary["loss"] = json!(loss.to_string());
        summary["cut"] = summary_json(&r.cut_summary);
        summary["exact"] = summary_json(&r.exact_summary);
        summary["weight"] = weight_json(&r.weight);
        summary["smp_theta1_mean"] = json!(r.smp_theta1_mean.as_slice());
    }
    summary["warnings"] = json!(warnings);
    out.write_json("fit.json", &summary)?;
    Ok(summary)
}
