// SPDX-License-Identifier: Apache-2.0

//! Closed-form and deterministic numerical oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interval, Potential};

/// Stationary moments `m₀..=m_{n_max}` of the Lévy-weighted Brownian integral.
///
/// Integrating the generator against `xⁿ` gives
/// `m_n = n(n−1) m_{n−2} / (r κ_n)` with `κ_n = 1 − E[Hⁿ]`; odd moments vanish
/// by symmetry.
pub fn levy_integral_moments(
    r_const: f64,
    h_moments: &dyn Fn(u32) -> f64,
    n_max: u32,
) -> Result<Vec<f64>> {
    if !(r_const > 0.0 && r_const.is_finite()) {
        return Err(Error::param(
            "r",
            format!("must be positive, got {r_const}"),
        ));
    }
    let mut m = vec![1.0];
    for n in 1..=n_max {
        if n % 2 == 1 {
            m.push(0.0);
            continue;
        }
        let eh = h_moments(n);
        if !(0.0..=1.0).contains(&eh) {
            return Err(Error::param(
                "h_moments",
                format!("E[H^{n}] = {eh} is outside [0, 1]"),
            ));
        }
        let kappa = 1.0 - eh;
        if kappa <= 0.0 {
            return Err(Error::param(
                "h_moments",
                format!("kappa_{n} = 0: moment {n} is infinite"),
            ));
        }
        let prev = m[n as usize - 2];
        m.push((n * (n - 1)) as f64 * prev / (r_const * kappa));
    }
    Ok(m)
}

/// `E[H^p]^{1/p}`, the per-step `W_p` contraction of the embedded chain.
pub fn embedded_contraction_factor(h_moment: &dyn Fn(f64) -> f64, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param("p", format!("must be >= 1, got {p}")));
    }
    let m = h_moment(p);
    if !(m >= 0.0) {
        return Err(Error::param(
            "h_moment",
            format!("E[H^p] = {m} is negative"),
        ));
    }
    Ok(m.powf(1.0 / p))
}

/// Reading of the invariant-density series of the embedded TCP chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityForm {
    /// `c^{−(n+1)}` inside the product over `k`, i.e. raised to the `n`.
    Verbatim,
    /// One factor `c^{−(n+1)}` per term, the density of `R⁻¹` of the
    /// autoregression `Z = c(Z + E)`.
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityValue {
    pub value: f64,
    /// Bound on the absolute contribution of the omitted terms.
    pub tail_bound: f64,
}

struct SeriesParams {
    a: f64,
    alpha: f64,
    /// `ln q` with `q = h^{−(α+1)} > 1`
    ln_q: f64,
    /// `ln 1/∏_{m≥1}(1 − c^m)`
    ln_prefactor: f64,
}

impl SeriesParams {
    fn new(a: f64, alpha: f64, h: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param("a", "must be positive"));
        }
        if !(alpha > -1.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", "must exceed -1"));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::param("h", "must lie in (0, 1)"));
        }
        let c = h.powf(alpha + 1.0);
        let mut ln_prod = 0.0;
        let mut cm = c;
        while cm > 1e-18 {
            ln_prod += (-cm).ln_1p();
            cm *= c;
        }
        Ok(SeriesParams {
            a,
            alpha,
            ln_q: -c.ln(),
            ln_prefactor: -ln_prod,
        })
    }

    fn r(&self, x: f64) -> f64 {
        self.a * x.powf(self.alpha)
    }

    fn big_r(&self, x: f64) -> f64 {
        self.a * x.powf(self.alpha + 1.0) / (self.alpha + 1.0)
    }

    /// `ln(q^k − 1)`
    fn ln_qk_minus_1(&self, k: f64) -> f64 {
        (k * self.ln_q).exp_m1().ln()
    }

    /// Power of `q` multiplying term `n`.
    fn q_power(form: DensityForm, n: f64) -> f64 {
        match form {
            DensityForm::Corrected => n + 1.0,
            DensityForm::Verbatim => n * (n + 1.0),
        }
    }

    /// `(sign, ln |term_n|)` without the `r(x)` factor.
    fn term(&self, form: DensityForm, n: usize, ln_denominator: f64, big_r: f64) -> (f64, f64) {
        let nf = n as f64;
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        let ln_abs = self.ln_prefactor - ln_denominator + Self::q_power(form, nf) * self.ln_q
            - ((nf + 1.0) * self.ln_q).exp() * big_r;
        (sign, ln_abs)
    }

    /// `ln |term_{n+1} / term_n|`
    fn ln_ratio(&self, form: DensityForm, n: f64, big_r: f64) -> f64 {
        let dq = Self::q_power(form, n + 1.0) - Self::q_power(form, n);
        dq * self.ln_q
            - self.ln_qk_minus_1(n + 1.0)
            - ((n + 1.0) * self.ln_q).exp() * self.ln_q.exp_m1() * big_r
    }
}

/// Invariant density of the embedded TCP chain for `r(x) = a x^α` and
/// `H = δ_h`, truncated after `n_terms` terms.
pub fn tcp_embedded_invariant_density(
    a: f64,
    alpha: f64,
    h: f64,
    x: f64,
    n_terms: usize,
    form: DensityForm,
) -> Result<DensityValue> {
    let p = SeriesParams::new(a, alpha, h)?;
    if n_terms == 0 {
        return Err(Error::param("n_terms", "must be at least 1"));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::param("x", "must be a finite non-negative state"));
    }
    let big_r = p.big_r(x);
    let rx = p.r(x);
    if rx == 0.0 {
        return Ok(DensityValue {
            value: 0.0,
            tail_bound: 0.0,
        });
    }
    let mut ln_den = 0.0;
    // signed log-space accumulation: track the largest magnitude as reference
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(n_terms);
    for n in 0..n_terms {
        if n > 0 {
            ln_den += p.ln_qk_minus_1(n as f64);
        }
        terms.push(p.term(form, n, ln_den, big_r));
    }
    let ln_max = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let series = if ln_max == f64::NEG_INFINITY {
        0.0
    } else {
        let scaled: f64 = terms.iter().map(|(s, l)| s * (l - ln_max).exp()).sum();
        scaled * ln_max.exp()
    };
    let value = rx * series;
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "density series overflowed at x={x}"
        )));
    }

    // ratio test from the first omitted term onwards
    let n = n_terms as f64;
    let ln_rho = p.ln_ratio(form, n, big_r);
    let ln_rho_next = p.ln_ratio(form, n + 1.0, big_r);
    let ln_next_term = {
        let ln_den_next = ln_den + p.ln_qk_minus_1(n);
        p.term(form, n_terms, ln_den_next, big_r).1
    };
    let tail_bound = if ln_rho < 0.0 && ln_rho_next <= ln_rho {
        rx * ln_next_term.exp() / (1.0 - ln_rho.exp())
    } else {
        f64::INFINITY
    };
    Ok(DensityValue { value, tail_bound })
}

/// A point beyond which the embedded density carries mass below `e^{−60}`.
pub fn embedded_density_support_end(a: f64, alpha: f64, h: f64) -> Result<f64> {
    let p = SeriesParams::new(a, alpha, h)?;
    let big_r = 60.0 / p.ln_q.exp();
    Ok(((alpha + 1.0) * big_r / a).powf(1.0 / (alpha + 1.0)))
}

/// `∫₀^∞` of the truncated density by adaptive Simpson quadrature.
pub fn embedded_density_normalization(
    a: f64,
    alpha: f64,
    h: f64,
    n_terms: usize,
    form: DensityForm,
) -> Result<f64> {
    let top = embedded_density_support_end(a, alpha, h)?;
    embedded_density_cdf(a, alpha, h, top, n_terms, form)
}

/// `∫₀^x` of the truncated density.
pub fn embedded_density_cdf(
    a: f64,
    alpha: f64,
    h: f64,
    x: f64,
    n_terms: usize,
    form: DensityForm,
) -> Result<f64> {
    tcp_embedded_invariant_density(a, alpha, h, 0.0, n_terms, form)?;
    let f = |z: f64| {
        tcp_embedded_invariant_density(a, alpha, h, z, n_terms, form)
            .map(|d| d.value)
            .unwrap_or(f64::NAN)
    };
    adaptive_simpson(&f, 0.0, x, 1e-10, 50)
        .ok_or_else(|| Error::Numeric("density quadrature did not converge".into()))
}

/// Cut points splitting the truncated density into `bins` cells of equal
/// mass, including the ends `0` and `+∞`. The mass is accumulated on a
/// fine partition of the effective support and inverted by bisection.
pub fn embedded_density_bin_edges(
    a: f64,
    alpha: f64,
    h: f64,
    n_terms: usize,
    form: DensityForm,
    bins: usize,
) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::param("bins", "need at least 2 bins"));
    }
    let top = embedded_density_support_end(a, alpha, h)?;
    let f = |z: f64| {
        tcp_embedded_invariant_density(a, alpha, h, z, n_terms, form)
            .map(|d| d.value)
            .unwrap_or(f64::NAN)
    };
    let segments = 512;
    let w = top / segments as f64;
    let mut cum = vec![0.0; segments + 1];
    for i in 0..segments {
        let piece = adaptive_simpson(&f, w * i as f64, w * (i + 1) as f64, 1e-13, 40)
            .ok_or_else(|| Error::Numeric("density quadrature did not converge".into()))?;
        cum[i + 1] = cum[i] + piece;
    }
    let total = cum[segments];
    if !(total > 0.0) {
        return Err(Error::Numeric(format!("density integrates to {total}")));
    }
    let mut edges = vec![0.0];
    for j in 1..bins {
        let target = total * j as f64 / bins as f64;
        let i = cum.partition_point(|&c| c < target).clamp(1, segments) - 1;
        let (mut lo, mut hi) = (w * i as f64, w * (i + 1) as f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let m = cum[i] + adaptive_simpson(&f, w * i as f64, mid, 1e-14, 40).unwrap_or(f64::NAN);
            if m < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    edges.push(f64::INFINITY);
    Ok(edges)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns `None` when the integrand is non-finite or more than
/// [`SIMPSON_MAX_EVALS`] evaluations would be needed.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Option<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    struct Q<'a> {
        f: &'a dyn Fn(f64) -> f64,
        evals: usize,
    }
    impl Q<'_> {
        fn eval(&mut self, x: f64) -> Option<f64> {
            self.evals += 1;
            let v = (self.f)(x);
            (v.is_finite() && self.evals <= SIMPSON_MAX_EVALS).then_some(v)
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            &mut self,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> Option<f64> {
            let m = 0.5 * (a + b);
            let flm = self.eval(0.5 * (a + m))?;
            let frm = self.eval(0.5 * (m + b))?;
            let left = simpson(fa, flm, fm, a, m);
            let right = simpson(fm, frm, fb, m, b);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return Some(left + right + delta / 15.0);
            }
            Some(
                self.recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
                    + self.recurse(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
            )
        }
    }
    if a == b {
        return Some(0.0);
    }
    let mut q = Q { f, evals: 0 };
    // split first so that narrow features are not missed by the initial stencil
    let pieces = 16;
    let w = (b - a) / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = a + w * i as f64;
        let hi = if i + 1 == pieces {
            b
        } else {
            a + w * (i + 1) as f64
        };
        let (fa, fm, fb) = (q.eval(lo)?, q.eval(0.5 * (lo + hi))?, q.eval(hi)?);
        let whole = simpson(fa, fm, fb, lo, hi);
        total += q.recurse(lo, hi, fa, fm, fb, whole, tol / pieces as f64, max_depth)?;
    }
    Some(total)
}

/// Evaluation budget of [`adaptive_simpson`].
pub const SIMPSON_MAX_EVALS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// Positive, normalised so that `Σ φᵢ² Δx = 1`.
    pub eigenvector: Vec<f64>,
    /// Interior grid points.
    pub grid: Vec<f64>,
    /// `‖Hφ − λφ‖₂ / ‖φ‖₂`
    pub residual: f64,
}

/// Residual tolerance for an accepted eigenpair.
pub const EIGEN_TOLERANCE: f64 = 1e-8;

/// Number of eigenvalues of the tridiagonal matrix `(d, e)` below `lambda`.
fn sturm_count(d: &[f64], e2: f64, lambda: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &di) in d.iter().enumerate() {
        q = di - lambda - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (di.abs() + lambda.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T − shift I) v = b` for the constant off-diagonal `e` (Thomas algorithm).
fn thomas(d: &[f64], e: f64, shift: f64, b: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut denom = d[0] - shift;
    c[0] = e / denom;
    y[0] = b[0] / denom;
    for i in 1..n {
        denom = d[i] - shift - e * c[i - 1];
        c[i] = e / denom;
        y[i] = (b[i] - e * y[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    y
}

fn tri_apply(d: &[f64], e: f64, v: &[f64]) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let mut s = d[i] * v[i];
            if i > 0 {
                s += e * v[i - 1];
            }
            if i + 1 < n {
                s += e * v[i + 1];
            }
            s
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ground state of `−f'' + W f` on a window with Dirichlet ends, for a
/// potential `W` sampled at the interior grid points.
pub fn ground_state(
    w: &dyn Fn(f64) -> f64,
    window: Interval,
    n_grid: usize,
) -> Result<EigenResult> {
    if !window.is_finite() {
        return Err(Error::param("window", "must be finite"));
    }
    if n_grid < 3 {
        return Err(Error::param("n_grid", "need at least 3 interior points"));
    }
    let h = window.width() / (n_grid + 1) as f64;
    let grid: Vec<f64> = (1..=n_grid).map(|i| window.lo + h * i as f64).collect();
    let inv_h2 = 1.0 / (h * h);
    let d: Vec<f64> = grid.iter().map(|&x| 2.0 * inv_h2 + w(x)).collect();
    if let Some(i) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::Eigen(format!(
            "potential is not finite at x={}",
            grid[i]
        )));
    }
    let e = -inv_h2;
    let e2 = e * e;

    // Gershgorin lower end; the smallest diagonal entry bounds λ₀ above.
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (dmin - 2.0 * inv_h2, dmin);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&d, e2, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let shift = lo - (hi - lo).max(f64::EPSILON * (1.0 + lo.abs()));
    let mut v = vec![1.0; n_grid];
    for _ in 0..6 {
        v = thomas(&d, e, shift, &v);
        let norm = dot(&v, &v).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Eigen("inverse iteration diverged".into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    let tv = tri_apply(&d, e, &v);
    let lambda = dot(&v, &tv) / dot(&v, &v);
    let residual = tv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
        / dot(&v, &v).sqrt();
    if !(residual < EIGEN_TOLERANCE) {
        return Err(Error::Eigen(format!(
            "residual {residual:e} above tolerance"
        )));
    }
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let vmax = v.iter().copied().fold(0.0, f64::max);
    if let Some(i) = v.iter().position(|&x| x < -1e-8 * vmax) {
        return Err(Error::Eigen(format!(
            "ground state changes sign at x={}: window too small",
            grid[i]
        )));
    }
    let scale = (dot(&v, &v) * h).sqrt();
    v.iter_mut().for_each(|x| *x = x.max(0.0) / scale);
    Ok(EigenResult {
        lambda,
        eigenvector: v,
        grid,
        residual,
    })
}

/// Smallest eigenvalue of `H f = −f'' + (q''/2 + q'²/4) f`.
pub fn schrodinger_ground_state(
    q_prime: &dyn Fn(f64) -> f64,
    q_second: &dyn Fn(f64) -> f64,
    window: Interval,
    n_grid: usize,
) -> Result<EigenResult> {
    if n_grid < 100 {
        return Err(Error::param("n_grid", "must be at least 100"));
    }
    let w = |x: f64| {
        let d = q_prime(x);
        0.5 * q_second(x) + 0.25 * d * d
    };
    ground_state(&w, window, n_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LangevinRate {
    pub lambda: f64,
    /// `inf q''` over the window grid, the curvature of the process.
    pub inf_q_second: f64,
    pub warning: Option<String>,
}

/// Exponential Wasserstein rate of Langevin dynamics from the Schrödinger ground state.
pub fn langevin_rate(q: &Potential, window: Interval, n_grid: usize) -> Result<LangevinRate> {
    let eig = schrodinger_ground_state(&*q.dq, &*q.d2q, window, n_grid)?;
    let inf_q_second = window
        .grid(n_grid)?
        .iter()
        .map(|&x| (q.d2q)(x))
        .fold(f64::INFINITY, f64::min);
    let warning = (inf_q_second >= 0.0).then(|| {
        format!(
            "q'' >= 0 on the window (inf q'' = {inf_q_second}); the curvature already gives a rate"
        )
    });
    Ok(LangevinRate {
        lambda: eig.lambda,
        inf_q_second,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dirac(h: f64) -> impl Fn(u32) -> f64 {
        move |n| h.powi(n as i32)
    }

    #[test]
    fn levy_moments_examples() {
        let m = levy_integral_moments(1.0, &dirac(0.5), 4).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(m[1], 0.0);
        assert!((m[2] - 8.0 / 3.0).abs() < 1e-14);
        assert!((m[4] - 512.0 / 15.0).abs() < 1e-12);
        assert_eq!(
            levy_integral_moments(7.0, &dirac(0.5), 0).unwrap(),
            vec![1.0]
        );
        let tiny = levy_integral_moments(2.0, &dirac(1e-9), 2).unwrap();
        assert!((tiny[2] - 1.0).abs() < 1e-12);
        assert!(levy_integral_moments(1.0, &dirac(1.0), 2).is_err());
        assert!(levy_integral_moments(1.0, &dirac(1.0), 1).is_ok());
    }

    #[test]
    fn levy_moments_match_product_formula() {
        for h in [0.25, 0.5, 0.9] {
            for r in [0.5, 1.0, 3.0] {
                let m = levy_integral_moments(r, &dirac(h), 8).unwrap();
                for k in 1..=4u32 {
                    let fact: f64 = (1..=2 * k).map(f64::from).product();
                    let prod: f64 = (1..=k).map(|j| 1.0 - h.powi(2 * j as i32)).product();
                    let direct = fact / (r.powi(k as i32) * prod);
                    assert!((m[2 * k as usize] - direct).abs() <= 1e-12 * direct);
                }
            }
        }
    }

    #[test]
    fn contraction_factor_examples() {
        assert_eq!(
            embedded_contraction_factor(&|p| 0.5f64.powf(p), 1.0).unwrap(),
            0.5
        );
        assert_eq!(embedded_contraction_factor(&|_| 1.0, 3.0).unwrap(), 1.0);
        let u = |p: f64| 1.0 / (p + 1.0);
        assert!(
            (embedded_contraction_factor(&u, 2.0).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15
        );
        assert!(embedded_contraction_factor(&u, 0.5).is_err());
    }

    #[test]
    fn density_forms_and_normalisation() {
        let corrected =
            embedded_density_normalization(1.0, 1.0, 0.5, 40, DensityForm::Corrected).unwrap();
        assert!((corrected - 1.0).abs() < 1e-6, "{corrected}");
        // the verbatim series either overflows near the origin or integrates away from 1
        match embedded_density_normalization(1.0, 1.0, 0.5, 40, DensityForm::Verbatim) {
            Ok(v) => assert!((v - 1.0).abs() > 1e-3, "{v}"),
            Err(e) => assert!(matches!(e, Error::Numeric(_))),
        }
        let top = embedded_density_support_end(1.0, 1.0, 0.5).unwrap();
        for i in 0..=400 {
            let x = top * i as f64 / 400.0;
            let d = tcp_embedded_invariant_density(1.0, 1.0, 0.5, x, 40, DensityForm::Corrected)
                .unwrap();
            assert!(d.value >= -1e-12, "x={x}: {}", d.value);
        }
    }

    #[test]
    fn closed_form_cdf_agrees_with_quadrature() {
        // ∫₀ˣ r e^{−sR} s dz = 1 − e^{−sR(x)}, so the corrected CDF is Σ Aₙ(1 − e^{−q^{n+1}R(x)})
        let (q, x): (f64, f64) = (4.0, 0.9);
        let big_r = x * x / 2.0;
        let prefactor: f64 = 1.0 / (1..60).map(|m| 1.0 - q.powi(-m)).product::<f64>();
        let mut a_n = prefactor;
        let mut cdf = 0.0;
        for n in 0..40 {
            if n > 0 {
                a_n /= 1.0 - q.powi(n);
            }
            cdf += a_n * (1.0 - (-q.powi(n + 1) * big_r).exp());
        }
        let quad = embedded_density_cdf(1.0, 1.0, 0.5, x, 40, DensityForm::Corrected).unwrap();
        assert!((quad - cdf).abs() < 1e-9, "{quad} vs {cdf}");
    }

    #[test]
    fn bin_edges_are_equiprobable() {
        let edges =
            embedded_density_bin_edges(1.0, 1.0, 0.5, 40, DensityForm::Corrected, 10).unwrap();
        assert_eq!(edges.len(), 11);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        for (j, &e) in edges.iter().enumerate().take(10).skip(1) {
            let m = embedded_density_cdf(1.0, 1.0, 0.5, e, 40, DensityForm::Corrected).unwrap();
            assert!((m - j as f64 / 10.0).abs() < 1e-7, "{j}: {m}");
        }
    }

    #[test]
    fn density_rejects_bad_parameters() {
        assert!(
            tcp_embedded_invariant_density(1.0, 1.0, 1.0, 1.0, 10, DensityForm::Corrected).is_err()
        );
        assert!(
            tcp_embedded_invariant_density(0.0, 1.0, 0.5, 1.0, 10, DensityForm::Corrected).is_err()
        );
        assert!(
            tcp_embedded_invariant_density(1.0, -1.0, 0.5, 1.0, 10, DensityForm::Corrected)
                .is_err()
        );
        assert!(
            tcp_embedded_invariant_density(1.0, 1.0, 0.5, 1.0, 0, DensityForm::Corrected).is_err()
        );
    }

    #[test]
    fn simpson_basic() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 40).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        assert_eq!(adaptive_simpson(&|x| x, 1.0, 1.0, 1e-9, 10), Some(0.0));
        assert!(adaptive_simpson(&|x: f64| 1.0 / x, 0.0, 1.0, 1e-9, 60).is_none());
    }

    #[test]
    fn ou_ground_state() {
        let eig =
            schrodinger_ground_state(&|x| x, &|_| 1.0, Interval::new(-10.0, 10.0).unwrap(), 4001)
                .unwrap();
        assert!((eig.lambda - 1.0).abs() < 1e-3);
        assert!(eig.residual < EIGEN_TOLERANCE);
        assert!(eig.eigenvector.iter().all(|&v| v >= 0.0));
        let h = eig.grid[1] - eig.grid[0];
        let norm: f64 = eig.eigenvector.iter().map(|v| v * v).sum::<f64>() * h;
        assert!((norm - 1.0).abs() < 1e-12);
        // ground state ∝ e^{−x²/4}
        let mid = eig.grid.len() / 2;
        let ratio = eig.eigenvector[mid + 400] / eig.eigenvector[mid];
        let x = eig.grid[mid + 400] - eig.grid[mid];
        assert!((ratio - (-x * x / 4.0).exp()).abs() < 1e-3);
    }

    #[test]
    fn constant_potential_interval() {
        let eig = ground_state(
            &|_| 2.5,
            Interval::new(0.0, std::f64::consts::PI).unwrap(),
            2000,
        )
        .unwrap();
        assert!((eig.lambda - 3.5).abs() < 1e-5);
    }

    #[test]
    fn langevin_rates() {
        let ou2 = langevin_rate(
            &Potential::quadratic(2.0),
            Interval::new(-10.0, 10.0).unwrap(),
            4001,
        )
        .unwrap();
        assert!((ou2.lambda - 2.0).abs() < 1e-3);
        assert!(ou2.warning.is_some());
        assert!(ou2.lambda >= ou2.inf_q_second - 1e-3);

        let dw = Potential::double_well();
        let a = langevin_rate(&dw, Interval::new(-8.0, 8.0).unwrap(), 4001).unwrap();
        let b = langevin_rate(&dw, Interval::new(-12.0, 12.0).unwrap(), 6001).unwrap();
        let c = langevin_rate(&dw, Interval::new(-8.0, 8.0).unwrap(), 8001).unwrap();
        assert!(a.lambda > 0.0 && a.warning.is_none());
        assert!((a.lambda - b.lambda).abs() < 1e-3);
        assert!((a.lambda - c.lambda).abs() < 1e-3);
    }

    #[test]
    fn small_window_flags_or_converges() {
        assert!(
            schrodinger_ground_state(&|x| x, &|_| 1.0, Interval::new(-1.0, 1.0).unwrap(), 50)
                .is_err()
        );
    }

    proptest! {
        #[test]
        fn eigenvalue_weakly_decreases_with_window(half in 3.0f64..6.0, extra in 0.5f64..3.0) {
            // fixed spacing 0.01
            let n = |w: f64| (2.0 * w / 0.01).round() as usize - 1;
            let qp = |x: f64| x * x * x - x;
            let qs = |x: f64| 3.0 * x * x - 1.0;
            let small = schrodinger_ground_state(&qp, &qs, Interval::new(-half, half).unwrap(), n(half)).unwrap();
            let w2 = half + extra;
            let big = schrodinger_ground_state(&qp, &qs, Interval::new(-w2, w2).unwrap(), n(w2)).unwrap();
            prop_assert!(big.lambda <= small.lambda + 1e-5);
        }

        #[test]
        fn density_truncation_within_tail_bound(x in 0.05f64..4.0, n in 3usize..15) {
            let a = tcp_embedded_invariant_density(1.0, 1.0, 0.5, x, n, DensityForm::Corrected).unwrap();
            let b = tcp_embedded_invariant_density(1.0, 1.0, 0.5, x, 2 * n, DensityForm::Corrected).unwrap();
            prop_assert!((a.value - b.value).abs() <= a.tail_bound * (1.0 + 1e-9) + 1e-15);
        }

        #[test]
        fn contraction_factor_monotone_in_p(p in 1.0f64..6.0, dp in 0.0f64..4.0, lo in 0.0f64..0.9) {
            let m = |q: f64| (1.0 - lo.powf(q + 1.0)) / ((q + 1.0) * (1.0 - lo));
            prop_assert!(embedded_contraction_factor(&m, p).unwrap() <= embedded_contraction_factor(&m, p + dp).unwrap() + 1e-12);
        }
    }
}
