//! Bilateral trade-flow analysis toolkit.
//!
//! The crate is organised around a two-stage analysis of trade panels:
//!
//! 1. [`nnclassifier`] learns whether a trade link exists from the binary
//!    provision vector of the governing trade agreement, and [`shapley`]
//!    ranks provisions by their mean absolute Shapley attribution.
//! 2. [`fm`] fits a second-order factorization machine to the log of the
//!    nonzero flows using the top-ranked provisions plus exporter, importer
//!    and year dummies, exposing pairwise provision interactions.
//!
//! [`pipeline`] wires both stages together and [`gravity`] provides the
//! classical econometric baselines (log-linear gravity, PPML and
//! Lasso-penalised PPML with three-way fixed effects).

pub mod dataset;
pub mod error;
pub mod fm;
pub mod gravity;
pub mod nnclassifier;
pub mod pipeline;
pub mod shapley;

mod linalg;
mod rng;

pub use error::{Error, Result};
