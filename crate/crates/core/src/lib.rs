//! Confounding adjustment for anticausal prediction tasks: residualization
//! versus causality-aware counterfactual features, with simulators, closed
//! forms, learners, independence diagnostics and an experiment harness.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the harness and CLI use.

pub mod adjust;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod scalar;
pub mod sim;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Dataset = sim::Dataset<f64>;
pub type LinearFit = linalg::LinearFit<f64>;
pub type AdditiveFit = linalg::AdditiveFit<f64>;
pub type AdjustedPair = adjust::AdjustedPair<f64>;
pub type TrainedModel = learners::TrainedModel<f64>;
pub type MetricReport = learners::MetricReport<f64>;
pub type DiagnosticReport = diagnostics::DiagnosticReport<f64>;
pub type TheoryParams = theory::TheoryParams<f64>;
pub type ShiftTheoryParams = theory::ShiftTheoryParams<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type Dataset32 = sim::Dataset<f32>;
