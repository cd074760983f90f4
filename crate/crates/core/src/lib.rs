//! Adaptive low-pass filtering with sliding-window Gaussian processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: squared-exponential covariance and its hyperparameter
//!   derivatives.
//! - [`gp`]: exact posterior, negative log-likelihood and gradient on one
//!   data set.
//! - [`swgp`]: the streaming filter with per-sample sign-based
//!   hyperparameter adaptation.
//! - [`analysis`]: exact error decomposition, incremental inverse and the
//!   uniform error bound for a window.
//! - [`baseline`]: classical causal filters for comparison.
//! - [`signal`]: test-signal generation, frequency-response measurement and
//!   MSE sweeps.
//! - [`robot`]: closed-loop two-link manipulator demonstration and latency
//!   benchmark.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baseline;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod robot;
pub mod signal;
pub mod swgp;

pub use baseline::{FirFilter, IirFilter, StepFilter};
pub use error::{Error, Result};
pub use gp::GpPosterior;
pub use kernel::{Hyperparameters, Inputs};
pub use swgp::{SwGpConfig, SwGpFilter};
