//! Estimation and testing of the association between a covariate vector and
//! a multivariate outcome.
//!
//! The estimator learns, by cross-validated ensemble regression, the convex
//! combination of (standardized) outcomes that is easiest to predict from
//! the covariates, and reports the cross-validated nonparametric R² of that
//! composite outcome together with influence-function confidence intervals
//! and a one-sided test of no association. Group variable importance,
//! canonical-correlation and PCA baselines, and Monte Carlo study drivers
//! round out the toolkit.

pub mod association;
pub mod baselines;
pub mod data;
pub mod error;
pub mod importance;
pub mod learners;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod simplex;
pub mod simulation;
pub mod stats;
pub mod superlearner;
pub mod weights;

pub use error::{Error, Result};
