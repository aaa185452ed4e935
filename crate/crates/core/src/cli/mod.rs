//! Command-line front end behind the `smi` binary.

pub mod analyze;
pub mod config;
pub mod fit;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::smp::NumeratorMode;
use analyze::{cmd_analyze, AnalyzeRequest};
use config::{Experiment, LossChoice, RunConfig};
use fit::{cmd_fit, FitOptions};
use run::cmd_run;

#[derive(Debug, Parser)]
#[command(name = "smi", version, about = "Cut, exact and semi-modular posteriors for two-module models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation experiment and write CSV/JSON results.
    Run(RunArgs),
    /// Fit cut, exact and semi-modular posteriors to a data file.
    Fit(FitArgs),
    /// Evaluate closed-form risk quantities.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated contamination grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long, env = "SMI_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub n_cut_draws: Option<usize>,
    #[arg(long)]
    pub mcmc_iter: Option<usize>,
    #[arg(long)]
    pub mcmc_burn_in: Option<usize>,
    #[arg(long)]
    pub mcmc_thin: Option<usize>,
    /// conservative, plain, scalar or plain-cut-only.
    #[arg(long)]
    pub omega_mode: Option<NumeratorMode>,
    /// `squared` or `component:J` (0-based).
    #[arg(long)]
    pub loss: Option<LossChoice>,
    #[arg(long)]
    pub trim_nu: Option<f64>,
    #[arg(long)]
    pub scale_by_n: bool,
    #[arg(long)]
    pub paper_kernel: bool,
    /// HPV data file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub eta_norm2: Option<Vec<f64>>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a risk.svg line chart.
    #[arg(long)]
    pub svg: bool,
}

impl RunArgs {
    /// Config file values, then flags.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut c = match (&self.config, self.experiment) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(e)) => RunConfig::new(e),
            (None, None) => return crate::error::invalid("pass --experiment or --config"),
        };
        if let Some(e) = self.experiment {
            c.experiment = e;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = Some(v.clone()); } )* };
        }
        set!(reps, grid, d1, threads, n_cut_draws, mcmc_iter, mcmc_burn_in, mcmc_thin, omega_mode, loss, trim_nu, data, tau2, sigma2, gamma, eta_norm2, draws);
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        c.scale_by_n |= self.scale_by_n;
        c.paper_kernel |= self.paper_kernel;
        c.svg |= self.svg;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Model spec (flat TOML with `family = "biased-mean" | "random-effects" | "hpv"`).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub loss: Option<LossChoice>,
    /// Fixed mixing weight; skips estimation.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub omega_mode: Option<NumeratorMode>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "smi-fit")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Kummer's ₁F₁(a; b; x).
    #[arg(long, num_args = 3, value_names = ["A", "B", "X"], allow_hyphen_values = true)]
    pub f1: Option<Vec<f64>>,
    /// E[1/χ²_κ(λ)] with λ the Poisson-mixture parameter.
    #[arg(long, num_args = 2, value_names = ["KAPPA", "LAMBDA"])]
    pub inv_chisq: Option<Vec<f64>>,
    #[arg(long)]
    pub lemma1: bool,
    #[arg(long)]
    pub omega_star: bool,
    #[arg(long)]
    pub corollary2: bool,
    #[arg(long)]
    pub d1: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub tau2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta2: f64,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Cut asymptotic variance (times the identity) for --omega-star.
    #[arg(long, default_value_t = 2.0)]
    pub a_var: f64,
    /// Exact asymptotic variance (times the identity) for --omega-star.
    #[arg(long, default_value_t = 1.0)]
    pub b_var: f64,
    /// Value of every drift component for --omega-star.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub bias: f64,
    /// TOML file with info_p11, info_11_2, bias and optional curvature.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl AnalyzeArgs {
    pub fn to_request(&self) -> AnalyzeRequest {
        AnalyzeRequest {
            f1: self.f1.as_ref().map(|v| [v[0], v[1], v[2]]),
            inv_chisq: self.inv_chisq.as_ref().map(|v| [v[0], v[1]]),
            lemma1: self.lemma1,
            omega_star: self.omega_star,
            corollary2: self.corollary2,
            d1: self.d1,
            tau2: self.tau2,
            sigma2: self.sigma2,
            eta2: self.eta2,
            gamma: self.gamma,
            lambda: self.lambda,
            a_var: self.a_var,
            b_var: self.b_var,
            bias: self.bias,
            spec_file: self.spec.clone(),
            out_dir: self.out.clone(),
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let report = cmd_run(&args.to_config()?)?;
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Fit(args) => {
            let opts = FitOptions { loss: args.loss, omega: args.omega, omega_mode: args.omega_mode, seed: args.seed, out_dir: args.out.clone() };
            let report = cmd_fit(&args.model, &args.data, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Command::Analyze(args) => {
            let report = cmd_analyze(&args.to_request())?;
            for (name, v) in &report.values {
                println!("{name} = {v}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
