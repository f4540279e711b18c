//! Core algorithms for explaining the sign of the idiosyncratic part of annual
//! stock returns from ESG and benchmark features.
//!
//! The crate is `no_std` (it only needs `alloc`) and performs no IO. File
//! formats, the command-line driver and parallel orchestration live in the
//! `alphabit` companion crate.
//!
//! Pipeline stages, in order:
//!
//! - [`panel`]: company-year data model and monthly returns.
//! - [`factor`]: rolling CAPM / FF3 regressions and the one-bit target.
//! - [`splits`]: company-wise and temporal validation plans.
//! - [`gbdt`]: gradient-boosted trees on LogLoss with categorical and missing values.
//! - [`tuning`]: random hyperparameter search, pooling and bootstrap error bars.
//! - [`metrics`]: cross-entropy, balanced accuracy, dependence reports.
//! - [`explain`]: TreeSHAP, partial dependence, materiality matrices, Benjamini-Hochberg.
//! - [`synth`]: synthetic markets with planted ESG effects.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod explain;
pub mod factor;
pub mod gbdt;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod panel;
pub mod seed;
pub mod splits;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
