//! Concrete two-module systems.

pub mod biased_mean;
pub mod hpv;
pub mod random_effects;

use crate::posterior::ParamSplit;

/// Likelihood factors and priors of a two-module model.
///
/// Module 1 is `f₁(Z | θ₁) π(θ₁)`, module 2 is `f₂(Z | θ₁, θ₂) π(θ₂ | θ₁)`.
pub trait TwoModuleModel {
    type Data;

    /// (d₁, d₂) for a given dataset.
    fn dims(&self, data: &Self::Data) -> (usize, usize);
    fn log_f1(&self, data: &Self::Data, theta1: &[f64]) -> f64;
    fn log_f2(&self, data: &Self::Data, theta1: &[f64], theta2: &[f64]) -> f64;
    fn log_prior1(&self, theta1: &[f64]) -> f64;
    fn log_prior2(&self, theta2: &[f64], theta1: &[f64]) -> f64;
    fn truth(&self, data: &Self::Data) -> ParamSplit;

    fn log_joint(&self, data: &Self::Data, theta1: &[f64], theta2: &[f64]) -> f64 {
        self.log_f1(data, theta1)
            + self.log_f2(data, theta1, theta2)
            + self.log_prior1(theta1)
            + self.log_prior2(theta2, theta1)
    }

    /// Unnormalized cut posterior for θ₁.
    fn log_cut_kernel(&self, data: &Self::Data, theta1: &[f64]) -> f64 {
        self.log_f1(data, theta1) + self.log_prior1(theta1)
    }

    /// Unnormalized π(θ₂ | Z, θ₁), shared by the cut and exact posteriors.
    fn log_conditional2(&self, data: &Self::Data, theta1: &[f64], theta2: &[f64]) -> f64 {
        self.log_f2(data, theta1, theta2) + self.log_prior2(theta2, theta1)
    }
}
