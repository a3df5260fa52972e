//! Adaptive accelerated Bayesian reliability acceptance sampling plans for
//! exponential competing-risk lifetimes under simple step-stress partially
//! accelerated life testing with type-II censoring.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the analytic risk machinery
//! is tuned for.

// `!(x > y)` rejects NaN on purpose; Gauss-Kronrod constants keep their tabulated digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod datalab;
pub mod decision;
pub mod error;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod risk;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PriorSpec = model::PriorSpec<f64>;
pub type LossPoly = model::LossPoly<f64>;
pub type CostModel = model::CostModel<f64>;
pub type Plan = model::Plan<f64>;
pub type Theta = model::Theta<f64>;
pub type SuffStats = decision::SuffStats<f64>;
pub type PlanEvaluation = risk::PlanEvaluation<f64>;
pub type SearchConfig = optimizer::SearchConfig<f64>;
pub type OptResult = optimizer::OptResult<f64>;
pub type RawDataset = datalab::RawDataset<f64>;
pub type MleResult = datalab::MleResult<f64>;
pub type McEstimate = datalab::McEstimate<f64>;
