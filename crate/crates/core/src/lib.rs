//! Power and sample-size calculations for heterogeneity of treatment effect
//! analyses in cluster-randomized trials.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod api;
pub mod closedform;
pub mod correlation;
pub mod designs;
pub mod engine;
pub mod linalg;
pub mod montecarlo;
pub mod scalar;
pub mod solver;

pub use scalar::Real;

pub type OutcomeCorrelation = correlation::OutcomeCorrelation<f64>;
pub type CovariateCorrelation = correlation::CovariateCorrelation<f64>;
pub type OutcomeModel = engine::OutcomeModel<f64>;
pub type CovariateModel = engine::CovariateModel<f64>;
pub type VarianceReport = engine::VarianceReport<f64>;
