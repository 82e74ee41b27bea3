// SPDX-License-Identifier: Apache-2.0

//! Model data for the jump-diffusion class
//!
//! ```text
//! Lf(x) = σ(x) f''(x) + g(x) f'(x) + r(x) ( ∫₀¹ f(F(x,θ)) dθ − f(x) )
//! ```
//!
//! together with the concrete instances used throughout the crate and the
//! structural checks (sign constraints, supplied derivatives, stochastic
//! monotonicity proxies) that every downstream bound depends on.
//!
//! `σ` is the coefficient of `f''`, so the pathwise noise is `√(2σ(x)) dB`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

pub type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Eval2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Number of midpoint nodes used for θ-integrals of opaque jump maps.
pub const THETA_NODES: usize = 64;

/// A state-space interval with possibly infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn real_line() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn half_line() -> Self {
        Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `n` uniformly spaced points including both ends.
    pub fn grid(&self, n: usize) -> Result<Vec<f64>> {
        if !self.is_finite() {
            return Err(Error::param("window", "grid needs a finite window"));
        }
        if n < 2 {
            return Err(Error::param("n_grid", "need at least 2 points"));
        }
        let step = self.width() / (n - 1) as f64;
        Ok((0..n)
            .map(|i| {
                if i == n - 1 {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect())
    }

    /// The finite window used for structural validation of unbounded models.
    pub fn validation_window(&self) -> Interval {
        let lo = if self.lo.is_finite() {
            self.lo
        } else {
            (-10.0f64).min(self.hi - 10.0)
        };
        let hi = if self.hi.is_finite() {
            self.hi
        } else {
            10.0f64.max(lo + 10.0)
        };
        Interval { lo, hi }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A coefficient together with its user-supplied derivative.
#[derive(Clone)]
pub struct ScalarField {
    label: String,
    value: Eval,
    deriv: Eval,
    affine: Option<(f64, f64)>,
}

impl ScalarField {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            label: label.into(),
            value: Arc::new(value),
            deriv: Arc::new(deriv),
            affine: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::affine(c, 0.0)
    }

    /// `intercept + slope·x`; the simulator integrates affine drifts exactly.
    pub fn affine(intercept: f64, slope: f64) -> Self {
        ScalarField {
            label: format!("{intercept} + {slope}*x"),
            value: Arc::new(move |x| intercept + slope * x),
            deriv: Arc::new(move |_| slope),
            affine: Some((intercept, slope)),
        }
    }

    pub fn from_exprs(value_src: &str, deriv_src: &str) -> Result<Self> {
        let value = Expr::parse(value_src)?;
        let deriv = Expr::parse(deriv_src)?;
        if value.is_constant() && deriv.is_constant() {
            let c = value.eval(0.0);
            return Ok(ScalarField {
                label: value_src.to_string(),
                ..Self::constant(c)
            });
        }
        Ok(ScalarField {
            label: value_src.to_string(),
            value: Arc::new(move |x| value.eval(x)),
            deriv: Arc::new(move |x| deriv.eval(x)),
            affine: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.deriv)(x)
    }

    pub fn affine_coeffs(&self) -> Option<(f64, f64)> {
        self.affine
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.affine {
            Some((c, 0.0)) => Some(c),
            _ => None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Compares the supplied derivative with a central difference of step
    /// `1e-5·(1+|x|)` at every grid point, to relative tolerance `1e-4`.
    pub fn check_derivative(&self, grid: &[f64]) -> Result<()> {
        for &x in grid {
            let h = 1e-5 * (1.0 + x.abs());
            let numeric = (self.value(x + h) - self.value(x - h)) / (2.0 * h);
            let supplied = self.deriv(x);
            let scale = 1.0 + supplied.abs().max(numeric.abs());
            if !supplied.is_finite() || (supplied - numeric).abs() > 1e-4 * scale {
                return Err(Error::DerivativeMismatch {
                    field: self.label.clone(),
                    x,
                    supplied,
                    numeric,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("affine", &self.affine)
            .finish()
    }
}

/// Second-order data of a confining potential `q` for Langevin dynamics.
#[derive(Clone)]
pub struct Potential {
    pub q: Eval,
    pub dq: Eval,
    pub d2q: Eval,
    quadratic: Option<f64>,
}

impl Potential {
    pub fn new(
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dq: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2q: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Potential {
            q: Arc::new(q),
            dq: Arc::new(dq),
            d2q: Arc::new(d2q),
            quadratic: None,
        }
    }

    /// `q(x) = μx²/2`.
    pub fn quadratic(mu: f64) -> Self {
        Potential {
            quadratic: Some(mu),
            ..Self::new(move |x| 0.5 * mu * x * x, move |x| mu * x, move |_| mu)
        }
    }

    /// `x⁴/4 − x²/2`.
    pub fn double_well() -> Self {
        Self::new(
            |x| 0.25 * x.powi(4) - 0.5 * x * x,
            |x| x * x * x - x,
            |x| 3.0 * x * x - 1.0,
        )
    }

    pub fn from_exprs(q: &str, dq: &str, d2q: &str) -> Result<Self> {
        let (q, dq, d2q) = (Expr::parse(q)?, Expr::parse(dq)?, Expr::parse(d2q)?);
        Ok(Self::new(
            move |x| q.eval(x),
            move |x| dq.eval(x),
            move |x| d2q.eval(x),
        ))
    }

    /// Schrödinger potential `q''/2 + q'²/4` of the ground-state problem.
    pub fn schrodinger(&self, x: f64) -> f64 {
        let d = (self.dq)(x);
        0.5 * (self.d2q)(x) + 0.25 * d * d
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("quadratic", &self.quadratic)
            .finish_non_exhaustive()
    }
}

/// One atom of a finite mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub weight: f64,
    pub value: f64,
}

/// Law of a jump factor or jump amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HDist {
    Dirac(f64),
    Uniform { lo: f64, hi: f64 },
    Mixture(Vec<Atom>),
}

impl HDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            HDist::Dirac(c) if !c.is_finite() => Err(Error::param("dirac", "atom must be finite")),
            HDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => Err(
                Error::param("uniform", format!("need finite lo < hi, got {lo}, {hi}")),
            ),
            HDist::Mixture(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::param("mixture", "no atoms"));
                }
                if atoms
                    .iter()
                    .any(|a| !(a.weight > 0.0) || !a.weight.is_finite() || !a.value.is_finite())
                {
                    return Err(Error::param(
                        "mixture",
                        "weights must be positive and finite",
                    ));
                }
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::param(
                        "mixture",
                        format!("weights sum to {total}, not 1"),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            HDist::Dirac(c) => (*c, *c),
            HDist::Uniform { lo, hi } => (*lo, *hi),
            HDist::Mixture(atoms) => atoms
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), at| {
                    (a.min(at.value), b.max(at.value))
                }),
        }
    }

    /// True when some atom carries positive mass at exactly `v`.
    fn has_atom_at(&self, v: f64) -> bool {
        match self {
            HDist::Dirac(c) => *c == v,
            HDist::Uniform { .. } => false,
            HDist::Mixture(atoms) => atoms.iter().any(|a| a.value == v),
        }
    }

    /// `E[Hᵖ]` for `p ≥ 0` (support assumed non-negative when `p` is not an integer).
    pub fn moment(&self, p: f64) -> f64 {
        match self {
            HDist::Dirac(c) => c.powf(p),
            HDist::Uniform { lo, hi } => {
                (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / ((p + 1.0) * (hi - lo))
            }
            HDist::Mixture(atoms) => atoms.iter().map(|a| a.weight * a.value.powf(p)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1.0)
    }

    /// Inverse-CDF draw from a uniform `u ∈ [0,1)`.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            HDist::Dirac(c) => *c,
            HDist::Uniform { lo, hi } => lo + u * (hi - lo),
            HDist::Mixture(atoms) => pick_atom(atoms.iter().map(|a| (a.weight, a.value)), u),
        }
    }

    /// Draw from the size-biased law `h·H(dh)/E[H]`.
    pub fn sample_size_biased(&self, u: f64) -> f64 {
        match self {
            HDist::Dirac(c) => *c,
            HDist::Uniform { lo, hi } => (lo * lo + u * (hi * hi - lo * lo)).sqrt(),
            HDist::Mixture(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.weight * a.value).sum();
                pick_atom(
                    atoms.iter().map(|a| (a.weight * a.value / total, a.value)),
                    u,
                )
            }
        }
    }

    /// Draw from the `(1−h)`-biased law `(1−h)·H(dh)/E[1−H]`.
    pub fn sample_complement_biased(&self, u: f64) -> f64 {
        match self {
            HDist::Dirac(c) => *c,
            HDist::Uniform { lo, hi } => {
                let (a, b) = ((1.0 - lo).powi(2), (1.0 - hi).powi(2));
                1.0 - (a - u * (a - b)).sqrt()
            }
            HDist::Mixture(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.weight * (1.0 - a.value)).sum();
                pick_atom(
                    atoms
                        .iter()
                        .map(|a| (a.weight * (1.0 - a.value) / total, a.value)),
                    u,
                )
            }
        }
    }

    /// Atoms of a purely discrete law; `None` for the uniform law.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match self {
            HDist::Dirac(c) => Some(vec![Atom {
                weight: 1.0,
                value: *c,
            }]),
            HDist::Uniform { .. } => None,
            HDist::Mixture(atoms) => Some(atoms.clone()),
        }
    }
}

fn pick_atom(weighted: impl Iterator<Item = (f64, f64)>, u: f64) -> f64 {
    let mut acc = 0.0;
    let mut last = f64::NAN;
    for (w, v) in weighted {
        acc += w;
        last = v;
        if u < acc {
            return v;
        }
    }
    last
}

/// Structure of an opaque jump map, when one is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelShape {
    Opaque,
    /// `F(x,θ) = x − ln(θ)/rate`: an upward jump of exponential size.
    ShiftedExponential {
        rate: f64,
    },
}

/// A jump map `F(x,θ)` supplied as evaluators.
#[derive(Clone)]
pub struct GeneralJump {
    pub label: String,
    pub map: Eval2,
    pub dmap_dx: Eval2,
    pub shape: KernelShape,
}

impl fmt::Debug for GeneralJump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralJump")
            .field("label", &self.label)
            .field("shape", &self.shape)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum JumpLaw {
    /// `F(x,θ) = H x` with `H` drawn from a law on `(0,1]`.
    Multiplicative(HDist),
    /// `F(x,θ) = x − A` with `A ≥ 0`.
    AdditiveDown(HDist),
    General(GeneralJump),
}

impl JumpLaw {
    /// Additive upward exponential jumps of mean `1/rate`.
    pub fn shifted_exponential(rate: f64) -> Self {
        JumpLaw::General(GeneralJump {
            label: format!("x - ln(theta)/{rate}"),
            map: Arc::new(move |x, th: f64| x - th.ln() / rate),
            dmap_dx: Arc::new(|_, _| 1.0),
            shape: KernelShape::ShiftedExponential { rate },
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Multiplicative(h) => {
                h.validate()?;
                let (lo, hi) = h.support();
                // A uniform lower end of 0 carries no mass.
                let lo_ok = lo > 0.0 || (lo == 0.0 && !h.has_atom_at(0.0));
                if !lo_ok || hi > 1.0 {
                    return Err(Error::JumpSupport {
                        lo,
                        hi,
                        admissible: "(0, 1]",
                    });
                }
                Ok(())
            }
            JumpLaw::AdditiveDown(a) => {
                a.validate()?;
                let (lo, hi) = a.support();
                if lo < 0.0 {
                    return Err(Error::JumpSupport {
                        lo,
                        hi,
                        admissible: "[0, inf)",
                    });
                }
                Ok(())
            }
            JumpLaw::General(gj) => match gj.shape {
                KernelShape::ShiftedExponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                    Err(Error::param(
                        "lambda",
                        "exponential jump rate must be positive",
                    ))
                }
                _ => Ok(()),
            },
        }
    }

    /// Post-jump state `F(x,θ)`.
    #[inline]
    pub fn target(&self, x: f64, theta: f64) -> f64 {
        match self {
            JumpLaw::Multiplicative(h) => h.sample(theta) * x,
            JumpLaw::AdditiveDown(a) => x - a.sample(theta),
            JumpLaw::General(gj) => {
                // ln θ must stay finite; θ = 0 is a null event.
                let th = if theta <= 0.0 {
                    f64::MIN_POSITIVE
                } else {
                    theta
                };
                (gj.map)(x, th)
            }
        }
    }

    pub fn dtarget_dx(&self, x: f64, theta: f64) -> f64 {
        match self {
            JumpLaw::Multiplicative(h) => h.sample(theta),
            JumpLaw::AdditiveDown(_) => 1.0,
            JumpLaw::General(gj) => (gj.dmap_dx)(x, theta.max(f64::MIN_POSITIVE)),
        }
    }

    /// `∫₀¹ ∂ₓF(x,θ) dθ` and `∫₀¹ (x − F(x,θ)) dθ`, in closed form where the
    /// law allows it and by the fixed midpoint rule otherwise.
    pub fn potential_terms(&self, x: f64) -> (f64, f64) {
        self.potential_terms_with_nodes(x, THETA_NODES)
    }

    pub fn potential_terms_with_nodes(&self, x: f64, nodes: usize) -> (f64, f64) {
        match self {
            JumpLaw::Multiplicative(h) => {
                let m = h.mean();
                (m, x * (1.0 - m))
            }
            JumpLaw::AdditiveDown(a) => (1.0, a.mean()),
            JumpLaw::General(gj) => match gj.shape {
                KernelShape::ShiftedExponential { rate } => (1.0, -1.0 / rate),
                KernelShape::Opaque => {
                    let n = nodes.max(1);
                    let (mut m1, mut j) = (0.0, 0.0);
                    for i in 0..n {
                        let th = (i as f64 + 0.5) / n as f64;
                        m1 += (gj.dmap_dx)(x, th);
                        j += x - (gj.map)(x, th);
                    }
                    (m1 / n as f64, j / n as f64)
                }
            },
        }
    }

    /// Jumps that leave every state unchanged.
    pub fn is_degenerate(&self) -> bool {
        match self {
            JumpLaw::Multiplicative(h) => h.support() == (1.0, 1.0),
            JumpLaw::AdditiveDown(a) => a.support() == (0.0, 0.0),
            JumpLaw::General(_) => false,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            JumpLaw::Multiplicative(h) => format!("multiplicative {h:?}"),
            JumpLaw::AdditiveDown(a) => format!("additive-down {a:?}"),
            JumpLaw::General(gj) => format!("general {}", gj.label),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMonotonicity {
    Decreasing,
    Increasing,
    Constant,
    Unknown,
}

/// Everything needed to assemble a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub id: String,
    pub domain: Interval,
    pub g: ScalarField,
    pub sigma: ScalarField,
    pub rate: ScalarField,
    pub jump: JumpLaw,
    /// `None` infers the flag from the sign of `r'` on the validation grid.
    pub rate_monotonicity: Option<RateMonotonicity>,
    pub rate_global_bound: Option<f64>,
}

/// A validated model instance. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    id: String,
    domain: Interval,
    g: ScalarField,
    sigma: ScalarField,
    rate: ScalarField,
    jump: JumpLaw,
    rate_monotonicity: RateMonotonicity,
    rate_global_bound: Option<f64>,
    degenerate_jumps: bool,
}

const VALIDATION_POINTS: usize = 100;

impl ModelSpec {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            id,
            domain,
            g,
            sigma,
            rate,
            jump,
            rate_monotonicity,
            rate_global_bound,
        } = parts;
        Interval::new(domain.lo, domain.hi)?;
        jump.validate()?;

        let window = domain.validation_window();
        // Interior midpoints keep the finite-difference stencil inside the domain.
        let step = window.width() / VALIDATION_POINTS as f64;
        let grid: Vec<f64> = (0..VALIDATION_POINTS)
            .map(|i| window.lo + step * (i as f64 + 0.5))
            .collect();

        for (name, field) in [("sigma", &sigma), ("rate", &rate)] {
            for &x in grid.iter().chain([window.lo, window.hi].iter()) {
                let v = field.value(x);
                if !(v >= 0.0) {
                    return Err(Error::Hypothesis {
                        field: name.to_string(),
                        x,
                        reason: format!("must be non-negative, got {v}"),
                    });
                }
            }
        }
        g.check_derivative(&grid)?;
        sigma.check_derivative(&grid)?;
        rate.check_derivative(&grid)?;

        let observed = infer_monotonicity(&rate, &grid);
        let rate_monotonicity = match rate_monotonicity {
            None => observed,
            Some(claimed) => {
                let consistent = match claimed {
                    RateMonotonicity::Unknown => true,
                    RateMonotonicity::Constant => observed == RateMonotonicity::Constant,
                    RateMonotonicity::Decreasing | RateMonotonicity::Increasing => {
                        observed == claimed || observed == RateMonotonicity::Constant
                    }
                };
                if !consistent {
                    let x = witness_against(&rate, &grid, claimed);
                    return Err(Error::Hypothesis {
                        field: "rate".into(),
                        x,
                        reason: format!("declared {claimed:?} but r'({x}) = {}", rate.deriv(x)),
                    });
                }
                claimed
            }
        };

        let rate_global_bound = match (rate_global_bound, rate.constant_value()) {
            (Some(b), _) if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::param("rate_bound", "must be positive and finite"))
            }
            (Some(b), _) => Some(b),
            (None, Some(c)) if c > 0.0 => Some(c),
            _ => None,
        };

        let degenerate_jumps = jump.is_degenerate();
        Ok(ModelSpec {
            id,
            domain,
            g,
            sigma,
            rate,
            jump,
            rate_monotonicity,
            rate_global_bound,
            degenerate_jumps,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn domain(&self) -> Interval {
        self.domain
    }
    pub fn g(&self) -> &ScalarField {
        &self.g
    }
    pub fn sigma(&self) -> &ScalarField {
        &self.sigma
    }
    pub fn rate(&self) -> &ScalarField {
        &self.rate
    }
    pub fn jump(&self) -> &JumpLaw {
        &self.jump
    }
    pub fn rate_monotonicity(&self) -> RateMonotonicity {
        self.rate_monotonicity
    }
    pub fn rate_global_bound(&self) -> Option<f64> {
        self.rate_global_bound
    }
    /// Set when the jump map is the identity (accepted, but jumps are inert).
    pub fn degenerate_jumps(&self) -> bool {
        self.degenerate_jumps
    }

    /// True when `σ ≡ 0`, i.e. the model is a PDMP.
    pub fn is_pdmp(&self) -> bool {
        self.sigma.constant_value() == Some(0.0)
    }

    pub fn has_jumps(&self) -> bool {
        self.rate.constant_value() != Some(0.0)
    }

    pub fn with_rate_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::param("rate_bound", "must be positive and finite"));
        }
        self.rate_global_bound = Some(bound);
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

fn infer_monotonicity(rate: &ScalarField, grid: &[f64]) -> RateMonotonicity {
    if let Some((_, slope)) = rate.affine_coeffs() {
        return match slope {
            s if s > 0.0 => RateMonotonicity::Increasing,
            s if s < 0.0 => RateMonotonicity::Decreasing,
            _ => RateMonotonicity::Constant,
        };
    }
    let (mut pos, mut neg) = (false, false);
    for &x in grid {
        let d = rate.deriv(x);
        if d > 1e-14 {
            pos = true;
        } else if d < -1e-14 {
            neg = true;
        }
    }
    match (pos, neg) {
        (false, false) => RateMonotonicity::Constant,
        (true, false) => RateMonotonicity::Increasing,
        (false, true) => RateMonotonicity::Decreasing,
        (true, true) => RateMonotonicity::Unknown,
    }
}

fn witness_against(rate: &ScalarField, grid: &[f64], claimed: RateMonotonicity) -> f64 {
    let key = |x: &f64| match claimed {
        RateMonotonicity::Decreasing => -rate.deriv(*x),
        RateMonotonicity::Increasing => rate.deriv(*x),
        _ => -rate.deriv(*x).abs(),
    };
    grid.iter()
        .copied()
        .min_by(|a, b| key(a).total_cmp(&key(b)))
        .unwrap_or(f64::NAN)
}

fn multiplicative(h: HDist) -> Result<JumpLaw> {
    let law = JumpLaw::Multiplicative(h);
    law.validate()?;
    Ok(law)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

/// TCP window-size process: unit drift, multiplicative decreases.
pub fn make_tcp(rate: ScalarField, jump_h: HDist) -> Result<ModelSpec> {
    ModelSpec::new(ModelParts {
        id: "tcp".into(),
        domain: Interval::half_line(),
        g: ScalarField::constant(1.0),
        sigma: ScalarField::constant(0.0),
        rate,
        jump: multiplicative(jump_h)?,
        rate_monotonicity: None,
        rate_global_bound: None,
    })
}

/// Feller diffusion `dX = g X dt + √(2 s X) dB` with multiplicative jumps.
pub fn make_feller_bt(
    g_const: f64,
    s_const: f64,
    rate: ScalarField,
    jump_h: HDist,
) -> Result<ModelSpec> {
    positive("g", g_const)?;
    positive("s", s_const)?;
    ModelSpec::new(ModelParts {
        id: "feller_bt".into(),
        domain: Interval::half_line(),
        g: ScalarField::affine(0.0, g_const),
        sigma: ScalarField::affine(0.0, s_const),
        rate,
        jump: multiplicative(jump_h)?,
        rate_monotonicity: None,
        rate_global_bound: None,
    })
}

/// Stock with exponential depletion `−g x` and exponential restocking of mean `1/λ`.
pub fn make_storage(g_const: f64, lambda: f64, rate: ScalarField) -> Result<ModelSpec> {
    positive("g", g_const)?;
    positive("lambda", lambda)?;
    let spec = ModelSpec::new(ModelParts {
        id: "storage".into(),
        domain: Interval::half_line(),
        g: ScalarField::affine(0.0, -g_const),
        sigma: ScalarField::constant(0.0),
        rate,
        jump: JumpLaw::shifted_exponential(lambda),
        rate_monotonicity: None,
        rate_global_bound: None,
    })?;
    match spec.rate_monotonicity {
        RateMonotonicity::Increasing | RateMonotonicity::Constant => Ok(spec),
        other => Err(Error::Hypothesis {
            field: "rate".into(),
            x: f64::NAN,
            reason: format!("storage model needs a non-decreasing rate, found {other:?}"),
        }),
    }
}

/// Langevin dynamics `dX = √2 dB − q'(X) dt`.
pub fn make_langevin(q: &Potential) -> Result<ModelSpec> {
    let g = match q.quadratic {
        Some(mu) => ScalarField::affine(0.0, -mu),
        None => {
            let (dq, d2q) = (q.dq.clone(), q.d2q.clone());
            ScalarField::new("-q'", move |x| -dq(x), move |x| -d2q(x))
        }
    };
    ModelSpec::new(ModelParts {
        id: "langevin".into(),
        domain: Interval::real_line(),
        g,
        sigma: ScalarField::constant(1.0),
        rate: ScalarField::constant(0.0),
        jump: JumpLaw::Multiplicative(HDist::Dirac(1.0)),
        rate_monotonicity: None,
        rate_global_bound: None,
    })
}

/// Ornstein–Uhlenbeck process, the Langevin model with `q = μx²/2`.
pub fn make_ou(mu: f64) -> Result<ModelSpec> {
    positive("mu", mu)?;
    Ok(make_langevin(&Potential::quadratic(mu))?.with_id("ou"))
}

/// Brownian motion with multiplicative jumps at constant rate.
pub fn make_levy_integral(r_const: f64, jump_h: HDist) -> Result<ModelSpec> {
    positive("r", r_const)?;
    ModelSpec::new(ModelParts {
        id: "levy_integral".into(),
        domain: Interval::real_line(),
        g: ScalarField::constant(0.0),
        sigma: ScalarField::constant(1.0),
        rate: ScalarField::constant(r_const),
        jump: multiplicative(jump_h)?,
        rate_monotonicity: None,
        rate_global_bound: None,
    })
}

/// Outcome of one sufficient-condition check.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub condition: &'static str,
    pub passed: bool,
    /// First offending point `(x, θ, value)` when the check fails.
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Witness {
    pub x: f64,
    pub theta: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MonotoneVerdict {
    /// r non-increasing, jumps downward, F increasing in x.
    DecreasingBullets,
    /// r non-decreasing, jumps upward, F increasing in x.
    MirroredBullets,
    /// Neither list matches, but r is monotone and F is increasing in x.
    JumpStructureOnly,
    NotMonotone,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub decreasing: Vec<ConditionCheck>,
    pub mirrored: Vec<ConditionCheck>,
    pub verdict: MonotoneVerdict,
    pub note: String,
}

impl MonotoneReport {
    pub fn is_monotone(&self) -> bool {
        self.verdict != MonotoneVerdict::NotMonotone
    }
}

fn check_all(
    condition: &'static str,
    points: impl Iterator<Item = (f64, Option<f64>, f64)>,
    ok: impl Fn(f64) -> bool,
    worst: impl Fn(f64, f64) -> bool,
) -> ConditionCheck {
    let mut witness: Option<Witness> = None;
    for (x, theta, value) in points {
        if !ok(value) && witness.is_none_or(|w| worst(value, w.value)) {
            witness = Some(Witness { x, theta, value });
        }
    }
    ConditionCheck {
        condition,
        passed: witness.is_none(),
        witness,
    }
}

/// Checks the sufficient conditions for stochastic monotonicity on a grid,
/// in both the decreasing-rate form and its mirror. Diagnostic only.
pub fn validate_monotone(model: &ModelSpec, grid: &[f64]) -> Result<MonotoneReport> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if let Some(&x) = grid.iter().find(|x| !model.domain.contains(**x)) {
        return Err(Error::param(
            "grid",
            format!("point {x} outside domain {}", model.domain),
        ));
    }
    let thetas: Vec<f64> = (0..THETA_NODES)
        .map(|i| (i as f64 + 0.5) / THETA_NODES as f64)
        .collect();
    let rate = &model.rate;
    let jump = &model.jump;
    let tol = 1e-12;
    let pairs = || {
        grid.iter()
            .flat_map(|&x| thetas.iter().map(move |&th| (x, th)))
    };

    let r_dec = check_all(
        "r non-increasing",
        grid.iter().map(|&x| (x, None, rate.deriv(x))),
        |d| d <= tol,
        |a, b| a > b,
    );
    let r_inc = check_all(
        "r non-decreasing",
        grid.iter().map(|&x| (x, None, rate.deriv(x))),
        |d| d >= -tol,
        |a, b| a < b,
    );
    let below = check_all(
        "F(x,θ) <= x",
        pairs().map(|(x, th)| (x, Some(th), jump.target(x, th) - x)),
        |d| d <= tol * (1.0 + d.abs()),
        |a, b| a > b,
    );
    let above = check_all(
        "F(x,θ) >= x",
        pairs().map(|(x, th)| (x, Some(th), jump.target(x, th) - x)),
        |d| d >= -tol * (1.0 + d.abs()),
        |a, b| a < b,
    );
    let f_inc = check_all(
        "x -> F(x,θ) increasing",
        pairs().map(|(x, th)| (x, Some(th), jump.dtarget_dx(x, th))),
        |d| d >= 0.0,
        |a, b| a < b,
    );

    let dec_ok = r_dec.passed && below.passed && f_inc.passed;
    let mir_ok = r_inc.passed && above.passed && f_inc.passed;
    let (verdict, note) = if dec_ok {
        (
            MonotoneVerdict::DecreasingBullets,
            "sufficient conditions hold (decreasing rate)".to_string(),
        )
    } else if mir_ok {
        (
            MonotoneVerdict::MirroredBullets,
            "mirrored sufficient conditions hold (increasing rate)".to_string(),
        )
    } else if f_inc.passed && (r_dec.passed || r_inc.passed) {
        (
            MonotoneVerdict::JumpStructureOnly,
            "bullets not satisfied; monotonicity asserted by jump structure".to_string(),
        )
    } else {
        let why = if !f_inc.passed {
            "jump map not increasing in x"
        } else {
            "rate is not monotone"
        };
        (MonotoneVerdict::NotMonotone, why.to_string())
    };
    Ok(MonotoneReport {
        decreasing: vec![r_dec, below, f_inc.clone()],
        mirrored: vec![r_inc, above, f_inc],
        verdict,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn integer_grid() -> Vec<f64> {
        (0..=10).map(f64::from).collect()
    }

    #[test]
    fn interval_rules() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        let w = Interval::new(0.0, 1.0).unwrap();
        assert_eq!(w.grid(3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(Interval::half_line().grid(10).is_err());
        assert_eq!(
            Interval::half_line().validation_window(),
            Interval { lo: 0.0, hi: 10.0 }
        );
        assert_eq!(Interval::real_line().clip(-3.0), -3.0);
        assert_eq!(Interval::half_line().clip(-3.0), 0.0);
    }

    #[test]
    fn tcp_instances() {
        let m = make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap();
        assert_eq!(m.rate_monotonicity(), RateMonotonicity::Increasing);
        assert_eq!(m.g().constant_value(), Some(1.0));
        assert!(m.is_pdmp());
        assert_eq!(m.domain(), Interval::half_line());

        let c = make_tcp(ScalarField::constant(1.0), HDist::Dirac(0.5)).unwrap();
        assert_eq!(c.rate_monotonicity(), RateMonotonicity::Constant);
        assert_eq!(c.rate_global_bound(), Some(1.0));

        assert!(make_tcp(ScalarField::affine(0.0, 1.0), HDist::Dirac(0.5)).is_ok());
    }

    #[test]
    fn jump_support_rejected() {
        for h in [
            HDist::Dirac(1.5),
            HDist::Dirac(0.0),
            HDist::Uniform { lo: -0.1, hi: 0.5 },
            HDist::Mixture(vec![
                Atom {
                    weight: 0.5,
                    value: 0.5,
                },
                Atom {
                    weight: 0.5,
                    value: 1.2,
                },
            ]),
        ] {
            let err = make_tcp(ScalarField::constant(1.0), h).unwrap_err();
            assert!(matches!(err, Error::JumpSupport { .. }), "{err}");
        }
        // uniform on (0,1) is admissible
        assert!(make_levy_integral(4.0, HDist::Uniform { lo: 0.0, hi: 1.0 }).is_ok());
    }

    #[test]
    fn feller_and_storage_parameter_errors() {
        let r = || ScalarField::constant(3.0);
        assert!(make_feller_bt(0.0, 1.0, r(), HDist::Dirac(0.5)).is_err());
        assert!(make_feller_bt(1.0, -1.0, r(), HDist::Dirac(0.5)).is_err());
        let m = make_feller_bt(
            0.1,
            0.5,
            ScalarField::new("3/(1+x)", |x| 3.0 / (1.0 + x), |x| -3.0 / (1.0 + x).powi(2)),
            HDist::Dirac(0.5),
        )
        .unwrap();
        assert_eq!(m.rate_monotonicity(), RateMonotonicity::Decreasing);

        let dec = ScalarField::affine(2.0, -0.1);
        assert!(matches!(
            make_storage(1.0, 1.0, dec),
            Err(Error::Hypothesis { .. })
        ));
        assert!(make_storage(1.0, 0.0, ScalarField::constant(2.0)).is_err());
        assert!(make_storage(1.0, 1.0, ScalarField::constant(0.0)).is_ok());
        assert!(make_storage(1.0, 2.0, ScalarField::affine(1.0, 1.0)).is_ok());
    }

    #[test]
    fn langevin_and_levy() {
        let ou = make_ou(1.0).unwrap();
        assert_eq!(ou.g().affine_coeffs(), Some((0.0, -1.0)));
        assert!(!ou.has_jumps());
        assert!(make_ou(0.0).is_err());
        let dw = make_langevin(&Potential::double_well()).unwrap();
        assert!((dw.g().deriv(0.0) - 1.0).abs() < 1e-15);
        let bm = make_langevin(&Potential::new(|_| 0.0, |_| 0.0, |_| 0.0)).unwrap();
        assert_eq!(bm.g().value(3.0), 0.0);

        let deg = make_levy_integral(1.0, HDist::Dirac(1.0)).unwrap();
        assert!(deg.degenerate_jumps());
        assert!(!make_levy_integral(1.0, HDist::Dirac(0.5))
            .unwrap()
            .degenerate_jumps());
        assert!(make_levy_integral(0.0, HDist::Dirac(0.5)).is_err());
    }

    #[test]
    fn wrong_derivative_rejected() {
        let bad = ScalarField::new("x^2", |x| x * x, |x| x);
        let err = make_tcp(bad, HDist::Dirac(0.5)).unwrap_err();
        assert!(matches!(err, Error::DerivativeMismatch { .. }), "{err}");
    }

    #[test]
    fn negative_rate_rejected() {
        let neg = ScalarField::affine(-1.0, 1.0);
        assert!(matches!(
            make_tcp(neg, HDist::Dirac(0.5)),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn declared_monotonicity_checked() {
        let parts = |mono| ModelParts {
            id: "custom".into(),
            domain: Interval::half_line(),
            g: ScalarField::constant(1.0),
            sigma: ScalarField::constant(0.0),
            rate: ScalarField::affine(1.0, 1.0),
            jump: JumpLaw::Multiplicative(HDist::Dirac(0.5)),
            rate_monotonicity: Some(mono),
            rate_global_bound: None,
        };
        assert!(ModelSpec::new(parts(RateMonotonicity::Increasing)).is_ok());
        assert!(ModelSpec::new(parts(RateMonotonicity::Unknown)).is_ok());
        assert!(matches!(
            ModelSpec::new(parts(RateMonotonicity::Decreasing)),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn monotone_report_tcp() {
        let dec = make_tcp(
            ScalarField::new("1/(1+x)", |x| 1.0 / (1.0 + x), |x| -1.0 / (1.0 + x).powi(2)),
            HDist::Dirac(0.5),
        )
        .unwrap();
        let rep = validate_monotone(&dec, &integer_grid()).unwrap();
        assert!(rep.decreasing.iter().all(|c| c.passed));
        assert_eq!(rep.verdict, MonotoneVerdict::DecreasingBullets);

        let inc = make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap();
        let rep = validate_monotone(&inc, &integer_grid()).unwrap();
        assert_eq!(rep.verdict, MonotoneVerdict::JumpStructureOnly);
        assert_eq!(
            rep.note,
            "bullets not satisfied; monotonicity asserted by jump structure"
        );
        assert!(!rep.decreasing[0].passed);
        assert!(!rep.mirrored[1].passed);
    }

    #[test]
    fn monotone_report_storage_and_nonmonotone() {
        let st = make_storage(1.0, 1.0, ScalarField::affine(1.0, 1.0)).unwrap();
        let rep = validate_monotone(&st, &integer_grid()).unwrap();
        assert_eq!(rep.verdict, MonotoneVerdict::MirroredBullets);

        let wavy = make_tcp(
            ScalarField::new("sin x + 2", |x| x.sin() + 2.0, f64::cos),
            HDist::Dirac(0.5),
        )
        .unwrap();
        assert_eq!(wavy.rate_monotonicity(), RateMonotonicity::Unknown);
        let rep = validate_monotone(&wavy, &integer_grid()).unwrap();
        assert_eq!(rep.verdict, MonotoneVerdict::NotMonotone);
        // r' = cos x is most positive at x = 0 and most negative at x = 3 on the grid
        let w_dec = rep.decreasing[0].witness.unwrap();
        let w_inc = rep.mirrored[0].witness.unwrap();
        assert_eq!(w_dec.x, 0.0);
        assert_eq!(w_inc.x, 3.0);
        assert!(validate_monotone(&wavy, &[]).is_err());
        assert!(validate_monotone(&wavy, &[-1.0]).is_err());
    }

    #[test]
    fn zoo_signs_and_derivatives() {
        let zoo = vec![
            make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap(),
            make_feller_bt(1.0, 1.0, ScalarField::constant(3.0), HDist::Dirac(0.5)).unwrap(),
            make_storage(1.0, 2.0, ScalarField::affine(1.0, 1.0)).unwrap(),
            make_ou(1.0).unwrap(),
            make_langevin(&Potential::double_well()).unwrap(),
            make_levy_integral(4.0, HDist::Uniform { lo: 0.0, hi: 1.0 }).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in &zoo {
            let w = m.domain().validation_window();
            let pts: Vec<f64> = (0..100)
                .map(|_| rng.random_range(w.lo + 1e-3..w.hi))
                .collect();
            for &x in &pts {
                assert!(m.sigma().value(x) >= 0.0);
                assert!(m.rate().value(x) >= 0.0);
            }
            for f in [m.g(), m.sigma(), m.rate()] {
                f.check_derivative(&pts).unwrap();
            }
        }
    }

    #[test]
    fn analytic_moments_match_monte_carlo() {
        let laws = [
            HDist::Dirac(0.5),
            HDist::Uniform { lo: 0.0, hi: 1.0 },
            HDist::Uniform { lo: 0.2, hi: 0.9 },
            HDist::Mixture(vec![
                Atom {
                    weight: 0.3,
                    value: 0.25,
                },
                Atom {
                    weight: 0.7,
                    value: 0.75,
                },
            ]),
        ];
        let n = 1_000_000;
        for (k, law) in laws.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
            let draws: Vec<f64> = (0..n).map(|_| law.sample(rng.random::<f64>())).collect();
            for p in 1..=4 {
                let vals: Vec<f64> = draws.iter().map(|h| h.powi(p)).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let exact = law.moment(p as f64);
                assert!(
                    (mean - exact).abs() <= 3.0 * se + 1e-15,
                    "{law:?} p={p}: mc {mean} exact {exact} se {se}"
                );
            }
        }
    }

    #[test]
    fn biased_samplers_have_right_means() {
        // E under size-biased law = E[H²]/E[H]; under (1-h)-biasing = E[H(1-H)]/E[1-H].
        let laws = [
            HDist::Uniform { lo: 0.0, hi: 1.0 },
            HDist::Mixture(vec![
                Atom {
                    weight: 0.5,
                    value: 0.2,
                },
                Atom {
                    weight: 0.5,
                    value: 0.6,
                },
            ]),
        ];
        let n = 400_000;
        for law in &laws {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let sb: f64 = (0..n)
                .map(|_| law.sample_size_biased(rng.random()))
                .sum::<f64>()
                / n as f64;
            let cb: f64 = (0..n)
                .map(|_| law.sample_complement_biased(rng.random()))
                .sum::<f64>()
                / n as f64;
            let m1 = law.moment(1.0);
            let m2 = law.moment(2.0);
            assert!((sb - m2 / m1).abs() < 3e-3, "{law:?}: {sb}");
            assert!((cb - (m1 - m2) / (1.0 - m1)).abs() < 3e-3, "{law:?}: {cb}");
        }
    }

    #[test]
    fn opaque_quadrature_converges() {
        let law = JumpLaw::General(GeneralJump {
            label: "x*theta^2".into(),
            map: Arc::new(|x, th| x * th * th),
            dmap_dx: Arc::new(|_, th| th * th),
            shape: KernelShape::Opaque,
        });
        let (m64, j64) = law.potential_terms_with_nodes(2.0, 64);
        let (m128, j128) = law.potential_terms_with_nodes(2.0, 128);
        // exact: m1 = 1/3, J = 2*(1 - 1/3)
        assert!((m128 - 1.0 / 3.0).abs() < (m64 - 1.0 / 3.0).abs());
        assert!((m64 - 1.0 / 3.0).abs() < 1e-4);
        assert!((j128 - 4.0 / 3.0).abs() <= (j64 - 4.0 / 3.0).abs());
    }
}
