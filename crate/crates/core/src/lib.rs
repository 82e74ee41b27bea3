// SPDX-License-Identifier: Apache-2.0

//! Ergodicity toolkit for one-dimensional jump diffusions and PDMPs.
//!
//! Models are built in [`model`], their transport curvature and total-variation
//! constants evaluated in [`curvature`], paths and couplings generated by
//! [`simulate`] and [`coupling`], and summarised by [`metrics`]. Closed-form
//! oracles live in [`analytic`]; [`config`] holds the JSON and CSV formats.

// `!(a > b)` is used on purpose so that NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod coupling;
pub mod curvature;
pub mod error;
pub mod expr;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};

/// Version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use model::{HDist, Interval, JumpLaw, ModelSpec, Potential, ScalarField};
