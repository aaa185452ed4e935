//! Loss functions `q(β, B)` on a target `β = g(θ₁)`.
//!
//! Built-in quadratic losses report curvature `2Υ`, the Hessian of `q` in its
//! second argument. Every weight formula is linear in Υ in both numerator and
//! denominator, so the factor of two cancels.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Linear map `g` from θ₁ to the quantity of interest.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetMap {
    Identity,
    /// A single 0-based coordinate of θ₁.
    Component(usize),
    /// Several 0-based coordinates, in the given order.
    Select(Vec<usize>),
}

impl TargetMap {
    fn indices(&self, d1: usize) -> Vec<usize> {
        match self {
            TargetMap::Identity => (0..d1).collect(),
            TargetMap::Component(j) => vec![*j],
            TargetMap::Select(ix) => ix.clone(),
        }
    }

    pub fn output_dim(&self, d1: usize) -> usize {
        self.indices(d1).len()
    }

    pub fn apply(&self, theta1: &[f64]) -> Result<Vec<f64>> {
        let ix = self.indices(theta1.len());
        if let Some(&bad) = ix.iter().find(|&&j| j >= theta1.len()) {
            return invalid(format!("target index {bad} out of range for d1 = {}", theta1.len()));
        }
        Ok(ix.into_iter().map(|j| theta1[j]).collect())
    }

    /// Selection matrix G (k × d1) with g(θ₁) = Gθ₁.
    pub fn matrix(&self, d1: usize) -> Result<DMatrix<f64>> {
        let ix = self.indices(d1);
        let mut g = DMatrix::zeros(ix.len(), d1);
        for (r, &j) in ix.iter().enumerate() {
            if j >= d1 {
                return invalid(format!("target index {j} out of range for d1 = {d1}"));
            }
            g[(r, j)] = 1.0;
        }
        Ok(g)
    }
}

type LossFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type CurvatureFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum LossKind {
    /// ‖β − B‖²
    SquaredError,
    /// (β − B)ᵀ Υ (β − B) with constant Υ.
    Quadratic(DMatrix<f64>),
    /// User loss with analytic curvature.
    Custom { loss: LossFn, curvature: CurvatureFn },
}

impl fmt::Debug for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::SquaredError => f.write_str("SquaredError"),
            LossKind::Quadratic(u) => f.debug_tuple("Quadratic").field(u).finish(),
            LossKind::Custom { .. } => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossSpec {
    pub target: TargetMap,
    pub kind: LossKind,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::squared_error()
    }
}

impl LossSpec {
    pub fn squared_error() -> Self {
        Self { target: TargetMap::Identity, kind: LossKind::SquaredError }
    }

    /// Squared error on the single coordinate `j` (0-based).
    pub fn component(j: usize) -> Self {
        Self { target: TargetMap::Component(j), kind: LossKind::SquaredError }
    }

    pub fn quadratic(upsilon: DMatrix<f64>) -> Result<Self> {
        if !upsilon.is_square() || !crate::linalg::is_symmetric(&upsilon, 1e-12) {
            return invalid("quadratic loss needs a symmetric matrix");
        }
        if upsilon.clone().symmetric_eigen().eigenvalues.min() < 0.0 {
            return invalid("quadratic loss matrix must be positive semi-definite");
        }
        Ok(Self { target: TargetMap::Identity, kind: LossKind::Quadratic(upsilon) })
    }

    pub fn custom(
        loss: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        curvature: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            target: TargetMap::Identity,
            kind: LossKind::Custom { loss: Arc::new(loss), curvature: Arc::new(curvature) },
        }
    }

    pub fn with_target(mut self, target: TargetMap) -> Self {
        self.target = target;
        self
    }

    /// `q(β, B)` on already-mapped targets.
    pub fn loss(&self, beta: &[f64], b: &[f64]) -> Result<f64> {
        if beta.len() != b.len() {
            return invalid(format!("loss arguments have lengths {} and {}", beta.len(), b.len()));
        }
        let diff = DVector::from_iterator(beta.len(), beta.iter().zip(b).map(|(x, y)| x - y));
        Ok(match &self.kind {
            LossKind::SquaredError => diff.norm_squared(),
            LossKind::Quadratic(u) => {
                crate::linalg::check_square(u, diff.len(), "loss matrix")?;
                crate::linalg::quad_form(u, &diff)
            }
            LossKind::Custom { loss, .. } => loss(beta, b),
        })
    }

    /// Υ(β) = ∂²q/∂B∂Bᵀ at `beta`.
    pub fn curvature(&self, beta: &[f64]) -> DMatrix<f64> {
        let k = beta.len();
        match &self.kind {
            LossKind::SquaredError => DMatrix::identity(k, k) * 2.0,
            LossKind::Quadratic(u) => u * 2.0,
            LossKind::Custom { curvature, .. } => curvature(beta),
        }
    }

    /// Curvature pulled back to θ₁ coordinates: Gᵀ Υ(g(θ₁)) G.
    pub fn theta1_curvature(&self, at: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.target.matrix(at.len())?;
        let beta = self.target.apply(at)?;
        let c = self.curvature(&beta);
        crate::linalg::check_square(&c, beta.len(), "loss curvature")?;
        Ok(g.transpose() * c * g)
    }
}

/// `q(g(truth), g(estimate))`.
pub fn evaluate_loss(spec: &LossSpec, truth_theta1: &[f64], estimate_theta1: &[f64]) -> Result<f64> {
    if truth_theta1.len() != estimate_theta1.len() {
        return invalid(format!(
            "truth has length {} but estimate has length {}",
            truth_theta1.len(),
            estimate_theta1.len()
        ));
    }
    let beta = spec.target.apply(truth_theta1)?;
    let b = spec.target.apply(estimate_theta1)?;
    spec.loss(&beta, &b)
}
