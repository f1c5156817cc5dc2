//! Causal excursion effects for micro-randomized trials.
//!
//! Panels of decision records ([`data`]) are split into cross-fitting folds
//! ([`crossfit`]), nuisance functions are learned per fold ([`nuisance`]), and
//! the WCLS family of estimators ([`estimators`]) solves the resulting
//! estimating equations with sandwich inference. [`simulation`] holds the
//! generative models and the Monte Carlo harness; [`cli`] is the front end of
//! the `mrt-excursion` binary.

pub mod cli;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod nuisance;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
