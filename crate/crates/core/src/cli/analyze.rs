//! `smi analyze`: closed-form risk quantities.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::json;

use super::output::{num, OutputDir, Table};
use crate::analysis::{
    corollary2_risk_gap, hypergeom_1f1, inv_noncentral_chisq_mean, lemma1_bound, omega_star, risk_curve, risk_quadratic,
    AsymptoticSpec,
};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Default)]
pub struct AnalyzeRequest {
    pub f1: Option<[f64; 3]>,
    pub inv_chisq: Option<[f64; 2]>,
    pub lemma1: bool,
    pub omega_star: bool,
    pub corollary2: bool,
    pub d1: Option<u32>,
    pub tau2: f64,
    pub sigma2: f64,
    pub eta2: f64,
    pub gamma: Option<f64>,
    pub lambda: f64,
    /// Cut and exact asymptotic variances, as multiples of the identity.
    pub a_var: f64,
    pub b_var: f64,
    /// Every component of the drift vector.
    pub bias: f64,
    pub spec_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl AnalyzeRequest {
    pub fn new() -> Self {
        Self { tau2: 1.0, sigma2: 1.0, a_var: 2.0, b_var: 1.0, ..Default::default() }
    }
}

/// Matrix-valued problem description read by `--spec`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    info_p11: Vec<Vec<f64>>,
    info_11_2: Vec<Vec<f64>>,
    bias: Vec<f64>,
    curvature: Option<Vec<Vec<f64>>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return invalid(format!("{what} must be a square array of arrays"));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn load_spec(path: &Path) -> Result<AsymptoticSpec> {
    let f: SpecFile = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let k = f.bias.len();
    let ups = match &f.curvature {
        Some(c) => matrix(c, "curvature")?,
        None => DMatrix::identity(k, k),
    };
    AsymptoticSpec::new(matrix(&f.info_p11, "info_p11")?, matrix(&f.info_11_2, "info_11_2")?, DVector::from_vec(f.bias), ups)
}

pub struct AnalyzeReport {
    /// (name, value) in request order.
    pub values: Vec<(String, f64)>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_analyze(req: &AnalyzeRequest) -> Result<AnalyzeReport> {
    if req.f1.is_none() && req.inv_chisq.is_none() && !req.lemma1 && !req.omega_star && !req.corollary2 {
        return invalid("nothing to compute: pass at least one of --f1, --inv-chisq, --lemma1, --omega-star, --corollary2");
    }
    let mut values = Vec::new();
    let mut curve = None;
    if let Some([a, b, x]) = req.f1 {
        values.push(("hypergeom_1f1".to_string(), hypergeom_1f1(a, b, x)?));
    }
    if let Some([kappa, lambda]) = req.inv_chisq {
        values.push(("inv_noncentral_chisq_mean".to_string(), inv_noncentral_chisq_mean(kappa, lambda)?));
    }
    if req.lemma1 {
        let d1 = req.d1.ok_or_else(|| Error::InvalidInput("--lemma1 needs --d1".into()))?;
        let gamma = req.gamma.unwrap_or(f64::from(d1.saturating_sub(2)));
        values.push(("lemma1_bound".to_string(), lemma1_bound(d1, req.tau2, req.sigma2, req.eta2, gamma)?));
    }
    if req.corollary2 {
        let d1 = req.d1.ok_or_else(|| Error::InvalidInput("--corollary2 needs --d1".into()))?;
        let gamma = req.gamma.ok_or_else(|| Error::InvalidInput("--corollary2 needs --gamma".into()))?;
        values.push(("corollary2_risk_gap".to_string(), corollary2_risk_gap(gamma, d1, req.lambda)?));
    }
    if req.omega_star {
        let spec = match &req.spec_file {
            Some(p) => load_spec(p)?,
            None => {
                let k = req.d1.unwrap_or(1) as usize;
                if !(req.a_var > 0.0 && req.b_var > 0.0) {
                    return invalid("--a-var and --b-var must be positive");
                }
                let eye = DMatrix::<f64>::identity(k, k);
                AsymptoticSpec::new(&eye / req.a_var, &eye / req.b_var, DVector::from_element(k, req.bias), eye.clone())?
            }
        };
        let w = omega_star(&spec)?;
        values.push(("omega_star".to_string(), w));
        values.push(("risk_at_omega_star".to_string(), risk_quadratic(&spec, w)?));
        values.push(("risk_cut".to_string(), risk_quadratic(&spec, 0.0)?));
        values.push(("risk_exact".to_string(), risk_quadratic(&spec, 1.0)?));
        curve = Some(risk_curve(&spec, 101)?);
    }

    let mut files = Vec::new();
    if let Some(dir) = &req.out_dir {
        let mut out = OutputDir::create(dir, 0, "analyze")?;
        let obj: serde_json::Map<String, serde_json::Value> = values.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let res = (|| {
            out.write_json("analyze.json", &serde_json::Value::Object(obj))?;
            if let Some(c) = &curve {
                let mut t = Table::new(["omega", "risk"]);
                for &(w, r) in c {
                    t.push(vec![num(w), num(r)]);
                }
                out.write_csv("risk_curve.csv", &t)?;
            }
            Ok::<_, Error>(())
        })();
        match res {
            Ok(()) => files = out.written().to_vec(),
            Err(e) => {
                out.discard();
                return Err(e);
            }
        }
    }
    Ok(AnalyzeReport { values, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(r: &AnalyzeReport, name: &str) -> f64 {
        r.values.iter().find(|(k, _)| k == name).unwrap().1
    }

    #[test]
    fn documented_examples() {
        let mut req = AnalyzeRequest::new();
        req.lemma1 = true;
        req.d1 = Some(3);
        req.gamma = Some(1.0);
        let r = cmd_analyze(&req).unwrap();
        assert!((value(&r, "lemma1_bound") - 17.0 / 6.0).abs() < 1e-12);

        let mut req = AnalyzeRequest::new();
        req.omega_star = true;
        assert_eq!(value(&cmd_analyze(&req).unwrap(), "omega_star"), 1.0);

        let mut req = AnalyzeRequest::new();
        req.f1 = Some([1.0, 2.0, 1.0]);
        assert!((value(&cmd_analyze(&req).unwrap(), "hypergeom_1f1") - 1.718281828459045).abs() < 1e-12);
    }

    #[test]
    fn preconditions_are_reported() {
        assert!(cmd_analyze(&AnalyzeRequest::new()).is_err());
        let mut req = AnalyzeRequest::new();
        req.corollary2 = true;
        req.d1 = Some(4);
        req.gamma = Some(5.0);
        assert!(matches!(cmd_analyze(&req), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spec_file_and_curve_output() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.toml");
        std::fs::write(&spec, "info_p11 = [[0.5, 0.0], [0.0, 0.5]]\ninfo_11_2 = [[1.0, 0.0], [0.0, 1.0]]\nbias = [1.0, 0.0]\n").unwrap();
        let mut req = AnalyzeRequest::new();
        req.omega_star = true;
        req.spec_file = Some(spec);
        req.out_dir = Some(dir.path().join("out"));
        let r = cmd_analyze(&req).unwrap();
        // t = tr(2I − I) = 2, bias term = 1 → ω* = 2/3.
        assert!((value(&r, "omega_star") - 2.0 / 3.0).abs() < 1e-12);
        let text = std::fs::read_to_string(dir.path().join("out/risk_curve.csv")).unwrap();
        assert_eq!(text.lines().count(), 2 + 101);
    }
}
