//! Sequential probability assignment under logarithmic loss.
//!
//! The crate provides Bayesian mixture predictors (plain and smoothly
//! truncated), global sequential covers of hypothesis families, exact
//! Shtarkov sums and fixed-design game values, closed-form regret bounds,
//! and an experiment harness that checks empirical regret against those
//! bounds.

pub mod bounds;
pub mod covering;
pub mod error;
pub mod experts;
pub mod harness;
pub mod loss;
pub mod predictors;
pub mod shtarkov;

pub use error::{Error, Result};
pub use loss::{Label, LogWeight, LossValue, ProbValue};
