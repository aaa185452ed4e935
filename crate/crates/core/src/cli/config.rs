//! Run configuration: a flat TOML file whose keys mirror the `run` flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::smp::NumeratorMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BiasedMean,
    RandomEffects,
    Hpv,
    IdealizedGaussian,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::BiasedMean => "biased-mean",
            Experiment::RandomEffects => "random-effects",
            Experiment::Hpv => "hpv",
            Experiment::IdealizedGaussian => "idealized-gaussian",
        }
    }
}

/// Loss on θ₁: `squared` (identity curvature) or `component:j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossChoice {
    Squared,
    Component(usize),
}

impl fmt::Display for LossChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossChoice::Squared => f.write_str("squared"),
            LossChoice::Component(j) => write!(f, "component:{j}"),
        }
    }
}

impl FromStr for LossChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "squared" => Ok(LossChoice::Squared),
            Some(("component", j)) => j.parse().map(LossChoice::Component).map_err(|_| format!("bad component index `{j}`")),
            _ => Err(format!("unknown loss `{s}` (expected `squared` or `component:J`)")),
        }
    }
}

impl TryFrom<String> for LossChoice {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<LossChoice> for String {
    fn from(l: LossChoice) -> String {
        l.to_string()
    }
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("smi-out")
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Unset optional fields fall back to the experiment's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cut_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_thin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_mode: Option<NumeratorMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub scale_by_n: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub paper_kernel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_norm2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "is_false")]
    pub svg: bool,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: default_seed(),
            reps: None,
            grid: None,
            d1: None,
            threads: None,
            n_cut_draws: None,
            mcmc_iter: None,
            mcmc_burn_in: None,
            mcmc_thin: None,
            omega_mode: None,
            loss: None,
            trim_nu: None,
            scale_by_n: false,
            paper_kernel: false,
            data: None,
            tau2: None,
            sigma2: None,
            gamma: None,
            eta_norm2: None,
            draws: None,
            out_dir: default_out_dir(),
            svg: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form with `threads` and `out_dir`
    /// cleared, since neither affects results.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.threads = None;
        c.out_dir = default_out_dir();
        let digest = Sha256::digest(c.to_toml()?.as_bytes());
        Ok(hex::encode(digest))
    }
}
