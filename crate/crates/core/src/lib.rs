// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod models;
pub mod posterior;
pub mod risk;
pub mod rng;
pub mod samplers;
pub mod smp;

pub use error::{Error, Result};
