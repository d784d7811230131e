//! Sub-diffusive Black-Scholes model.
//!
//! Stock prices are driven by Brownian motion run on the inverse of a
//! subordinator, so the market has random dormant periods. The crate samples
//! the clock and the driven paths, changes measure with exponential
//! martingales, prices European claims under the sub-diffusion martingale
//! measure and cross-checks the prices against a time-fractional PDE solved
//! in Laplace space.

// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod girsanov;
pub mod laplace;
pub mod market;
pub mod pricer;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;
pub mod subdiffusion;
pub mod subordinator;
pub mod tfpde;

pub use error::{Error, Result};
