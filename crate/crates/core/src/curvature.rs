// SPDX-License-Identifier: Apache-2.0

//! Feynman–Kac potential, Wasserstein curvature and total-variation constants.
//!
//! The potential is the zeroth-order term of the intertwining
//! `(Lf)' = (L_S − V) f'` obtained by differentiating the generator:
//!
//! ```text
//! V(x) = −g'(x) + r(x)(1 − ∫∂ₓF(x,θ)dθ) + r'(x) ∫(x − F(x,θ))dθ
//! ```
//!
//! and the curvature is `ρ = inf V`, taken over a finite grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interval, ModelSpec};

/// Default number of grid points for infima over a window.
pub const DEFAULT_GRID: usize = 10_001;

/// `V(x)` without the domain check.
#[inline]
pub(crate) fn v_at(model: &ModelSpec, x: f64) -> f64 {
    let (m1, j) = model.jump().potential_terms(x);
    -model.g().deriv(x) + model.rate().value(x) * (1.0 - m1) + model.rate().deriv(x) * j
}

pub fn potential_v(model: &ModelSpec, x: f64) -> Result<f64> {
    if !model.domain().contains(x) {
        return Err(Error::param(
            "x",
            format!("{x} is outside the domain {}", model.domain()),
        ));
    }
    let v = v_at(model, x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("V({x}) is not finite")))
    }
}

/// User assertion about `V` outside the window, recorded alongside the infimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailAssertion {
    #[default]
    None,
    /// V is non-decreasing beyond the right end (and non-increasing before the left).
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub grid: Vec<f64>,
    pub v_values: Vec<f64>,
    pub rho: f64,
    pub argmin: f64,
    /// V was constant on the grid, so `rho` is that constant.
    pub constant: bool,
    pub tail_flag: TailAssertion,
}

fn check_window(model: &ModelSpec, window: &Interval) -> Result<()> {
    if !window.is_finite() || !model.domain().contains_interval(window) {
        return Err(Error::WindowOutsideDomain {
            lo: window.lo,
            hi: window.hi,
        });
    }
    Ok(())
}

pub fn curvature_rho(
    model: &ModelSpec,
    window: Interval,
    n_grid: usize,
) -> Result<CurvatureReport> {
    curvature_rho_with_tail(model, window, n_grid, TailAssertion::None)
}

pub fn curvature_rho_with_tail(
    model: &ModelSpec,
    window: Interval,
    n_grid: usize,
    tail: TailAssertion,
) -> Result<CurvatureReport> {
    check_window(model, &window)?;
    let grid = window.grid(n_grid)?;
    let v_values: Vec<f64> = grid.iter().map(|&x| v_at(model, x)).collect();
    if let Some(i) = v_values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("V({}) is not finite", grid[i])));
    }
    let (imin, &vmin) = v_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid has at least two points");
    let vmax = v_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let constant = vmax - vmin < 1e-12 * (1.0 + vmax.abs());
    let rho = if constant { v_values[0] } else { vmin };
    let argmin = if constant { grid[0] } else { grid[imin] };
    Ok(CurvatureReport {
        grid,
        v_values,
        rho,
        argmin,
        constant,
        tail_flag: tail,
    })
}

/// Curvature of the process time-changed by a subordinator with drift `b`
/// and atomic Lévy measure `Σ wᵢ δ_{zᵢ}`: `bρ + Σ wᵢ(1 − e^{−ρzᵢ})`.
pub fn subordinated_curvature(rho: f64, drift_b: f64, levy_atoms: &[(f64, f64)]) -> f64 {
    drift_b * rho
        + levy_atoms
            .iter()
            .map(|&(w, z)| -w * (-rho * z).exp_m1())
            .sum::<f64>()
}

/// Extrema over a window that enter the total-variation constants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateExtrema {
    /// inf r
    pub r_lower: f64,
    /// sup g'
    pub g_prime_upper: f64,
    /// sup |r'|
    pub r_prime_upper: f64,
}

pub fn rate_extrema(model: &ModelSpec, window: Interval, n_grid: usize) -> Result<RateExtrema> {
    check_window(model, &window)?;
    let grid = window.grid(n_grid)?;
    let mut ext = RateExtrema {
        r_lower: f64::INFINITY,
        g_prime_upper: f64::NEG_INFINITY,
        r_prime_upper: 0.0,
    };
    for &x in &grid {
        ext.r_lower = ext.r_lower.min(model.rate().value(x));
        ext.g_prime_upper = ext.g_prime_upper.max(model.g().deriv(x));
        ext.r_prime_upper = ext.r_prime_upper.max(model.rate().deriv(x).abs());
    }
    Ok(ext)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TvBoundConstants {
    pub theta: f64,
    pub k_mu_nu: f64,
    pub kappa: f64,
    pub r_lower: f64,
    pub g_prime_upper: f64,
    pub r_prime_upper: f64,
    pub c_kernel: f64,
    pub w0: f64,
}

/// `(C + r̄'/r̲)·r̲/(r̲ − ḡ')`, the Lipschitz factor of the local TV bound.
fn local_factor(ext: &RateExtrema, c_kernel: f64) -> f64 {
    (c_kernel + ext.r_prime_upper / ext.r_lower) * ext.r_lower / (ext.r_lower - ext.g_prime_upper)
}

fn tv_hypotheses(
    model: &ModelSpec,
    window: Interval,
    n_grid: usize,
    c_kernel: f64,
) -> Result<RateExtrema> {
    if !model.is_pdmp() {
        return Err(Error::Unsupported(
            "total-variation bounds need sigma = 0".into(),
        ));
    }
    if !(c_kernel >= 0.0 && c_kernel.is_finite()) {
        return Err(Error::param("c_kernel", "must be non-negative and finite"));
    }
    let ext = rate_extrema(model, window, n_grid)?;
    let bound = ext.g_prime_upper.max(0.0);
    if !(ext.r_lower > bound) {
        return Err(Error::RateTooSmall {
            r_lower: ext.r_lower,
            bound,
        });
    }
    Ok(ext)
}

/// Long-time bound `d_TV(μP_t, νP_t) ≤ K e^{−θt}` for PDMPs.
#[allow(clippy::too_many_arguments)]
pub fn tv_bound(
    model: &ModelSpec,
    window: Interval,
    n_grid: usize,
    kappa: f64,
    c_kernel: f64,
    w0: f64,
    t: f64,
) -> Result<(TvBoundConstants, f64)> {
    let ext = tv_hypotheses(model, window, n_grid, c_kernel)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", "must be positive"));
    }
    if !(w0 >= 0.0 && w0.is_finite()) {
        return Err(Error::param("w0", "must be non-negative"));
    }
    if !(t >= 0.0) {
        return Err(Error::param("t", "must be non-negative"));
    }
    let rho = curvature_rho(model, window, n_grid)?.rho;
    if kappa > rho + 1e-12 * (1.0 + rho.abs()) {
        return Err(Error::KappaExceedsCurvature { kappa, rho });
    }
    let r = ext.r_lower;
    let a = local_factor(&ext, c_kernel) * w0;
    let k_mu_nu = (kappa * a).powf(r / (r + kappa))
        + kappa.powf(kappa / (r + kappa)) * a.powf((r + 2.0 * kappa) / (r + kappa));
    let theta = kappa * r / (kappa + r);
    let consts = TvBoundConstants {
        theta,
        k_mu_nu,
        kappa,
        r_lower: r,
        g_prime_upper: ext.g_prime_upper,
        r_prime_upper: ext.r_prime_upper,
        c_kernel,
        w0,
    };
    Ok((consts, k_mu_nu * (-theta * t).exp()))
}

/// `d_TV(δₓP_t, δ_yP_t) ≤ e^{−t r̲} + |x−y|(C + r̄'/r̲)·r̲/(r̲ − ḡ')`.
#[allow(clippy::too_many_arguments)]
pub fn tv_local_bound(
    model: &ModelSpec,
    window: Interval,
    n_grid: usize,
    x: f64,
    y: f64,
    t: f64,
    c_kernel: f64,
) -> Result<f64> {
    let ext = tv_hypotheses(model, window, n_grid, c_kernel)?;
    if !(t >= 0.0) {
        return Err(Error::param("t", "must be non-negative"));
    }
    Ok((-t * ext.r_lower).exp() + (x - y).abs() * local_factor(&ext, c_kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use proptest::prelude::*;

    fn w(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn potential_examples() {
        for a in [0.5, 1.0, 3.0] {
            let tcp = make_tcp(ScalarField::affine(a, 1.0), HDist::Dirac(0.5)).unwrap();
            // (1 − E H)(r + x r') = x + a/2
            for x in [0.0, 1.0, 7.5] {
                assert!((potential_v(&tcp, x).unwrap() - (x + a / 2.0)).abs() < 1e-12);
            }
            let rep = curvature_rho(&tcp, w(0.0, 100.0), 1001).unwrap();
            assert!((rep.rho - a / 2.0).abs() < 1e-12);
            assert_eq!(rep.argmin, 0.0);
        }
        let ou = make_ou(1.0).unwrap();
        assert_eq!(potential_v(&ou, -3.0).unwrap(), 1.0);
        let st = make_storage(1.0, 1.0, ScalarField::constant(2.0)).unwrap();
        assert_eq!(potential_v(&st, 4.0).unwrap(), 1.0);
        assert!(potential_v(&st, -1.0).is_err());
    }

    #[test]
    fn curvature_examples() {
        let fb = make_feller_bt(1.0, 1.0, ScalarField::constant(3.0), HDist::Dirac(0.5)).unwrap();
        let rep = curvature_rho(&fb, w(0.0, 10.0), 101).unwrap();
        assert!(rep.constant);
        assert!((rep.rho - 0.5).abs() < 1e-15);

        let bm = make_langevin(&Potential::new(|_| 0.0, |_| 0.0, |_| 0.0)).unwrap();
        assert_eq!(curvature_rho(&bm, w(-5.0, 5.0), 11).unwrap().rho, 0.0);

        let tcp0 = make_tcp(ScalarField::affine(0.0, 1.0), HDist::Dirac(0.5)).unwrap();
        let rep = curvature_rho(&tcp0, w(0.0, 100.0), 101).unwrap();
        assert_eq!(rep.rho, 0.0);

        assert!(matches!(
            curvature_rho(&fb, w(-1.0, 1.0), 11),
            Err(Error::WindowOutsideDomain { .. })
        ));
        assert!(curvature_rho(&fb, w(0.0, 1.0), 1).is_err());
    }

    #[test]
    fn storage_curvature_uses_rate_slope() {
        // V = g − r'/λ for exponential restocking
        let st = make_storage(1.0, 2.0, ScalarField::affine(1.0, 1.0)).unwrap();
        let rep = curvature_rho(&st, w(0.0, 10.0), 101).unwrap();
        assert!((rep.rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subordination_examples() {
        assert_eq!(subordinated_curvature(1.0, 1.0, &[]), 1.0);
        assert_eq!(subordinated_curvature(0.0, 3.0, &[(2.0, 5.0)]), 0.0);
        let v = subordinated_curvature(std::f64::consts::LN_2, 0.0, &[(1.0, 1.0)]);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tv_storage_constants() {
        let st = make_storage(1.0, 1.0, ScalarField::constant(2.0)).unwrap();
        let (c, b) = tv_bound(&st, w(0.0, 10.0), 101, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!((c.theta - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.g_prime_upper, -1.0);
        // A = 1·2/3; K = (2/3)^(2/3) + (2/3)^(4/3)
        let k = (2.0f64 / 3.0).powf(2.0 / 3.0) + (2.0f64 / 3.0).powf(4.0 / 3.0);
        assert!((b - k).abs() < 1e-14);

        let (_, zero) = tv_bound(&st, w(0.0, 10.0), 101, 1.0, 1.0, 0.0, 3.0).unwrap();
        assert_eq!(zero, 0.0);

        let loc = tv_local_bound(&st, w(0.0, 10.0), 101, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!((loc - ((-2.0f64).exp() + 2.0 / 3.0)).abs() < 1e-15);
        let same = tv_local_bound(&st, w(0.0, 10.0), 101, 1.0, 1.0, 1.5, 1.0).unwrap();
        assert!((same - (-3.0f64).exp()).abs() < 1e-15);
        let far = tv_local_bound(&st, w(0.0, 10.0), 101, 0.0, 1.0, 1e3, 1.0).unwrap();
        assert!((far - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tv_increasing_rate_constants() {
        // g=1, λ=2, r=1+x on [0,10]: ρ = 0.5, so κ = 1.5 is rejected
        let st = make_storage(1.0, 2.0, ScalarField::affine(1.0, 1.0)).unwrap();
        assert!(matches!(
            tv_bound(&st, w(0.0, 10.0), 1001, 1.5, 2.0, 1.0, 1.0),
            Err(Error::KappaExceedsCurvature { .. })
        ));
        let (c, b) = tv_bound(&st, w(0.0, 10.0), 1001, 0.5, 2.0, 1.0, 1.0).unwrap();
        // hand evaluation: r̲=1, ḡ'=−1, r̄'=1, A = (2+1)·1/2 = 1.5
        let a: f64 = 1.5;
        let k = (0.5 * a).powf(1.0 / 1.5) + 0.5f64.powf(0.5 / 1.5) * a.powf(2.0 / 1.5);
        assert!((c.k_mu_nu - k).abs() < 1e-14);
        assert!((c.theta - 1.0 / 3.0).abs() < 1e-15);
        assert!((b - k * (-1.0f64 / 3.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn tv_hypothesis_errors() {
        let st = make_storage(1.0, 1.0, ScalarField::constant(0.0)).unwrap();
        assert!(matches!(
            tv_local_bound(&st, w(0.0, 10.0), 11, 0.0, 1.0, 1.0, 1.0),
            Err(Error::RateTooSmall { .. })
        ));
        let ou = make_ou(1.0).unwrap();
        assert!(matches!(
            tv_local_bound(&ou, w(-1.0, 1.0), 11, 0.0, 1.0, 1.0, 1.0),
            Err(Error::Unsupported(_))
        ));
        // g' = 1 > 0 requires r̲ > 1
        let tcp = make_tcp(ScalarField::constant(1.0), HDist::Dirac(0.5)).unwrap();
        assert!(tv_local_bound(&tcp, w(0.0, 10.0), 11, 0.0, 1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn linear_kernel_amount_independence() {
        for amount in [HDist::Dirac(0.3), HDist::Uniform { lo: 0.0, hi: 4.0 }] {
            let m = ModelSpec::new(ModelParts {
                id: "add".into(),
                domain: Interval::real_line(),
                g: ScalarField::new("-x^3", |x| -x * x * x, |x| -3.0 * x * x),
                sigma: ScalarField::constant(1.0),
                rate: ScalarField::constant(2.5),
                jump: JumpLaw::AdditiveDown(amount),
                rate_monotonicity: None,
                rate_global_bound: None,
            })
            .unwrap();
            for x in [-2.0, 0.0, 1.3] {
                assert_eq!(potential_v(&m, x).unwrap(), 3.0 * x * x);
            }
        }
    }

    proptest! {
        #[test]
        fn tcp_decreasing_rate_specialisation(c in 0.5f64..5.0, k in 0.1f64..3.0, h in 0.05f64..0.95) {
            // r = c/(1+kx) is decreasing; V = (1−h)(r + x r') on the grid
            let rate = ScalarField::new("c/(1+kx)", move |x| c / (1.0 + k * x), move |x| -c * k / (1.0 + k * x).powi(2));
            let m = make_tcp(rate.clone(), HDist::Dirac(h)).unwrap();
            let rep = curvature_rho(&m, w(0.0, 20.0), 2001).unwrap();
            let oracle = rep.grid.iter().map(|&x| (1.0 - h) * (rate.value(x) + x * rate.deriv(x))).fold(f64::INFINITY, f64::min);
            prop_assert!((rep.rho - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()));
        }

        #[test]
        fn subordination_monotone_in_rho(r1 in -2.0f64..2.0, dr in 0.0f64..2.0, b in 0.0f64..3.0,
                                         atoms in prop::collection::vec((0.01f64..3.0, 0.01f64..3.0), 0..5)) {
            prop_assert!(subordinated_curvature(r1, b, &atoms) <= subordinated_curvature(r1 + dr, b, &atoms) + 1e-12);
        }

        #[test]
        fn local_bound_monotone(t1 in 0.0f64..5.0, dt in 0.0f64..5.0, d1 in 0.0f64..3.0, dd in 0.0f64..3.0) {
            let st = make_storage(1.0, 1.0, ScalarField::constant(2.0)).unwrap();
            let win = w(0.0, 10.0);
            let b = |t, d| tv_local_bound(&st, win, 11, 0.0, d, t, 1.0).unwrap();
            prop_assert!(b(t1 + dt, d1) <= b(t1, d1));
            prop_assert!(b(t1, d1) <= b(t1, d1 + dd));
        }
    }
}
