// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::expr::ExprError;

/// Failure classes shared by every module of the crate.
///
/// The split between [`Error::is_validation`] and numeric failures is what
/// the command-line runner maps to its exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval: lo={lo} must be < hi={hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("{field} violates a structural hypothesis at x={x}: {reason}")]
    Hypothesis {
        field: String,
        x: f64,
        reason: String,
    },

    #[error("derivative of `{field}` disagrees with finite differences at x={x}: supplied {supplied}, finite difference {numeric}")]
    DerivativeMismatch {
        field: String,
        x: f64,
        supplied: f64,
        numeric: f64,
    },

    #[error("jump law support {lo}..{hi} outside the admissible range {admissible}")]
    JumpSupport {
        lo: f64,
        hi: f64,
        admissible: &'static str,
    },

    #[error("window [{lo}, {hi}] is not contained in the model domain")]
    WindowOutsideDomain { lo: f64, hi: f64 },

    #[error("rate too small: inf r = {r_lower} must exceed max(0, sup g') = {bound}")]
    RateTooSmall { r_lower: f64, bound: f64 },

    #[error("kappa = {kappa} exceeds the curvature lower bound rho = {rho}")]
    KappaExceedsCurvature { kappa: f64, rho: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("zero initial distance: contraction profile needs x0 != y0")]
    ZeroInitialDistance,

    #[error("sample sizes differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-positive value {value} at index {index} cannot be log-fitted")]
    NonPositive { index: usize, value: f64 },

    #[error("expression error: {0}")]
    Expr(#[from] ExprError),

    #[error("malformed document: {0}")]
    Parse(String),

    #[error("thinning bound violated on path {path} at t={time}: r(x)={rate} > bound {bound}")]
    ThinningBound {
        path: usize,
        time: f64,
        rate: f64,
        bound: f64,
    },

    #[error("non-finite state on path {path} at t={time}")]
    NonFinite { path: usize, time: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input (configuration, model data,
    /// theorem hypotheses); false for failures met while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::ThinningBound { .. }
                | Error::NonFinite { .. }
                | Error::Eigen(_)
                | Error::Numeric(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
