//! Conditional distribution, quantile, and prediction-interval estimates
//! from the outputs of any regression mean model.
//!
//! A fitted mean model reduces every covariate vector to a single number,
//! its fitted value. This crate smooths the training responses over those
//! fitted values with a univariate kernel, turning any point predictor into
//! a full conditional-distribution estimator: CDFs, quantile curves, and
//! prediction intervals that are non-decreasing in the probability level by
//! construction.
//!
//! The crate also ships the base regressors (ridge, random forest with
//! out-of-bag fitted values, gradient-boosted trees), the direct quantile
//! baselines they are compared against (pinball-loss linear and boosted
//! models, quantile forest weights), simulation scenarios with analytic
//! quantile oracles, and an evaluation harness for quantile error and
//! interval coverage. See the `examples/` directory for runnable
//! walkthroughs of each capability.

pub mod cdist;
pub mod error;
pub mod kernels;
pub mod seeding;

pub use cdist::{ConditionalDistributionModel, QuantileBand, ResponseGrid};
pub use error::{Error, Result};
pub use kernels::{BandwidthRule, KernelSpec};
