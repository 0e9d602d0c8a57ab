//! Quality estimation for items shown in ranked lists.
//!
//! Votes on a ranked list are driven by two things: how good an item is and
//! how many people actually looked at the slot it occupied. This crate fits a
//! Poisson regression with fixed effects for both, and ships a ground-truth
//! market simulator so recovery can be checked end to end.
//!
//! Layout:
//! - [`ranking`]: Reddit hot score, Hacker News top score and list ordering.
//! - [`sim`]: aggregator and MusicLab-style simulators with known truth.
//! - [`estimator`]: design matrices, likelihood, gradient and L-BFGS fitting.
//! - [`quality`]: normalized quality, position-bias curves, view estimates.
//! - [`evaluation`]: metrics, cross-validation and analysis procedures.
//! - [`ingest`]: JSONL parsing, inclusion filters and vote de-fuzzing.

// `!(x > 0.0)` deliberately also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod ingest;
pub mod quality;
pub mod ranking;
pub mod sim;
mod summation;
mod types;

pub use error::{Error, Result};
pub use types::{ArticleId, Mode};
