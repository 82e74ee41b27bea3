// SPDX-License-Identifier: Apache-2.0

//! Couplings of two copies of a model and the Feynman–Kac gradient estimator.
//!
//! * Synchronous: one Brownian path, one candidate-event clock, one `(u, Θ)`
//!   per event. Each copy jumps iff `u·r̄ ≤ r(state)`.
//! * Sticking (PDMPs only): the same rate coupling, but on a simultaneous jump
//!   the post-jump pair is drawn from a maximal coupling of the two jump
//!   kernels; once equal the copies move together.
//! * The gradient estimator simulates the auxiliary process of the
//!   intertwining `(Lf)' = (L_S − V) f'` and weights `f'(Y_t)` by
//!   `exp(−∫V(Y_s)ds)`.

use std::io::Write;

use serde::Serialize;

use crate::curvature::v_at;
use crate::error::{Error, Result};
use crate::metrics::mean_se;
use crate::model::{validate_monotone, Atom, HDist, JumpLaw, KernelShape, ModelSpec, ScalarField};
use crate::rng::{exp1, normal, path_rng, uniform, PathRng};
use crate::simulate::{
    check_bound, drive, par_paths, step_grid, write_matrix_csv, Clock, Flow, JumpClock, Process,
    SimConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CouplingKind {
    Synchronous,
    Sticking,
}

/// Checkpoint states of both copies, row-major `n_paths × n_checkpoints`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingOutcome {
    pub kind: CouplingKind,
    pub checkpoint_times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub y0: f64,
    pub clipped: u64,
}

impl CouplingOutcome {
    fn idx(&self, path: usize, k: usize) -> usize {
        path * self.checkpoint_times.len() + k
    }

    pub fn dist(&self, path: usize, k: usize) -> f64 {
        let i = self.idx(path, k);
        (self.x[i] - self.y[i]).abs()
    }

    pub fn is_equal(&self, path: usize, k: usize) -> bool {
        let i = self.idx(path, k);
        self.x[i] == self.y[i]
    }

    pub fn dist_column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.dist(i, k)).collect()
    }

    pub fn x_column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.x[self.idx(i, k)]).collect()
    }

    pub fn y_column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.y[self.idx(i, k)]).collect()
    }

    pub fn write_dist_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(w, &self.checkpoint_times, self.n_paths, |i, k| {
            self.dist(i, k)
        })
    }

    pub fn write_equal_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(w, &self.checkpoint_times, self.n_paths, |i, k| {
            u8::from(self.is_equal(i, k))
        })
    }
}

fn check_start(model: &ModelSpec, x0: f64, y0: f64) -> Result<()> {
    for (name, v) in [("x0", x0), ("y0", y0)] {
        if !model.domain().contains(v) {
            return Err(Error::param(
                name,
                format!("{v} outside domain {}", model.domain()),
            ));
        }
    }
    Ok(())
}

fn monotone_grid(model: &ModelSpec) -> Vec<f64> {
    model
        .domain()
        .validation_window()
        .grid(101)
        .expect("validation window is finite")
}

struct SyncPair<'a> {
    model: &'a ModelSpec,
    flow: &'a Flow,
    clock: JumpClock,
    path: usize,
    x: f64,
    y: f64,
    clipped: u64,
    out_x: Vec<f64>,
    out_y: Vec<f64>,
}

impl SyncPair<'_> {
    fn jump_if(&mut self, jx: bool, jy: bool, theta: f64) {
        let jump = self.model.jump();
        if jx {
            self.x = self
                .flow
                .clip(jump.target(self.x, theta), &mut self.clipped);
        }
        if jy {
            self.y = self
                .flow
                .clip(jump.target(self.y, theta), &mut self.clipped);
        }
    }
}

impl Process for SyncPair<'_> {
    fn advance(&mut self, h: f64, rng: &mut PathRng) -> Result<()> {
        let (x0, y0) = (self.x, self.y);
        let z = if self.flow.has_noise() {
            normal(rng)
        } else {
            0.0
        };
        self.x = self.flow.clip(self.flow.step(x0, h, z), &mut self.clipped);
        self.y = self.flow.clip(self.flow.step(y0, h, z), &mut self.clipped);
        if self.clock == JumpClock::Bernoulli {
            let rate = self.model.rate();
            let px = -(-rate.value(x0) * h).exp_m1();
            let py = -(-rate.value(y0) * h).exp_m1();
            let (u, theta) = (uniform(rng), uniform(rng));
            self.jump_if(u < px, u < py, theta);
        }
        Ok(())
    }

    fn candidate(&mut self, t: f64, rng: &mut PathRng) -> Result<()> {
        let JumpClock::Thinning(bound) = self.clock else {
            return Ok(());
        };
        let (u, theta) = (uniform(rng), uniform(rng));
        let (rx, ry) = (
            self.model.rate().value(self.x),
            self.model.rate().value(self.y),
        );
        check_bound(rx, bound, self.path, t)?;
        check_bound(ry, bound, self.path, t)?;
        self.jump_if(u * bound <= rx, u * bound <= ry, theta);
        Ok(())
    }

    fn record(&mut self, k: usize) {
        self.out_x[k] = self.x;
        self.out_y[k] = self.y;
    }

    fn finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Synchronous coupling; rejects models whose monotonicity check fails.
pub fn couple_synchronous(
    model: &ModelSpec,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
) -> Result<CouplingOutcome> {
    let report = validate_monotone(model, &monotone_grid(model))?;
    if !report.is_monotone() {
        let x = report
            .decreasing
            .iter()
            .chain(&report.mirrored)
            .find_map(|c| c.witness.map(|w| w.x))
            .unwrap_or(f64::NAN);
        return Err(Error::Hypothesis {
            field: "model".into(),
            x,
            reason: format!("monotonicity check failed: {}", report.note),
        });
    }
    couple_synchronous_unchecked(model, x0, y0, cfg)
}

/// Synchronous coupling without the monotonicity precondition.
pub fn couple_synchronous_unchecked(
    model: &ModelSpec,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
) -> Result<CouplingOutcome> {
    cfg.validate()?;
    check_start(model, x0, y0)?;
    let clock = JumpClock::for_model(model, cfg.jump_scheme)?;
    let flow = Flow::for_model(model, cfg.dt);
    let dt = step_grid(&flow, clock, cfg.dt);
    let n_ck = cfg.checkpoints.len();
    let rows = par_paths(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        let mut p = SyncPair {
            model,
            flow: &flow,
            clock,
            path: i,
            x: x0,
            y: y0,
            clipped: 0,
            out_x: vec![0.0; n_ck],
            out_y: vec![0.0; n_ck],
        };
        let c = Clock {
            dt,
            checkpoints: &cfg.checkpoints,
            event_rate: clock.event_rate(),
            path: i,
        };
        drive(&mut p, &c, &mut rng)?;
        Ok((p.out_x, p.out_y, p.clipped))
    })?;
    Ok(assemble(CouplingKind::Synchronous, cfg, x0, y0, rows))
}

fn assemble(
    kind: CouplingKind,
    cfg: &SimConfig,
    x0: f64,
    y0: f64,
    rows: Vec<(Vec<f64>, Vec<f64>, u64)>,
) -> CouplingOutcome {
    let clipped = rows.iter().map(|r| r.2).sum();
    let mut x = Vec::with_capacity(rows.len() * cfg.checkpoints.len());
    let mut y = Vec::with_capacity(x.capacity());
    for (rx, ry, _) in rows {
        x.extend(rx);
        y.extend(ry);
    }
    CouplingOutcome {
        kind,
        checkpoint_times: cfg.checkpoints.clone(),
        x,
        y,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        x0,
        y0,
        clipped,
    }
}

/// Closed-form maximal couplings of `K(x,·)` and `K(y,·)`.
#[derive(Debug, Clone)]
pub enum KernelCoupler {
    /// `K(x,·) = x + Exp(λ)`.
    ShiftedExponential { rate: f64 },
    /// `K(x,·) = Σ wᵢ δ_{hᵢx}`.
    MultiplicativeAtoms(Vec<Atom>),
    /// `K(x,·) = Σ wᵢ δ_{x−aᵢ}`.
    AdditiveAtoms(Vec<Atom>),
}

impl KernelCoupler {
    pub fn for_law(law: &JumpLaw) -> Result<Self> {
        let unsupported =
            |what: &str| Error::Unsupported(format!("no maximal kernel coupling for {what}"));
        match law {
            JumpLaw::General(gj) => match gj.shape {
                KernelShape::ShiftedExponential { rate } => {
                    Ok(KernelCoupler::ShiftedExponential { rate })
                }
                KernelShape::Opaque => Err(unsupported("an opaque jump map")),
            },
            JumpLaw::Multiplicative(h) => h
                .atoms()
                .map(KernelCoupler::MultiplicativeAtoms)
                .ok_or_else(|| unsupported("a continuous jump factor")),
            JumpLaw::AdditiveDown(a) => a
                .atoms()
                .map(KernelCoupler::AdditiveAtoms)
                .ok_or_else(|| unsupported("a continuous jump amount")),
        }
    }

    /// Post-jump locations with merged weights.
    fn atoms_at(&self, x: f64) -> Vec<(f64, f64)> {
        let raw: Vec<(f64, f64)> = match self {
            KernelCoupler::MultiplicativeAtoms(a) => {
                a.iter().map(|a| (a.value * x, a.weight)).collect()
            }
            KernelCoupler::AdditiveAtoms(a) => a.iter().map(|a| (x - a.value, a.weight)).collect(),
            KernelCoupler::ShiftedExponential { .. } => unreachable!("continuous kernel"),
        };
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (loc, w) in raw {
            match merged.iter_mut().find(|m| m.0 == loc) {
                Some(m) => m.1 += w,
                None => merged.push((loc, w)),
            }
        }
        merged
    }

    /// Probability that the maximal coupling makes the two jumps land together.
    pub fn stick_probability(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelCoupler::ShiftedExponential { rate } => (-rate * (x - y).abs()).exp(),
            _ => {
                let fy = self.atoms_at(y);
                self.atoms_at(x)
                    .iter()
                    .map(|&(loc, wx)| fy.iter().find(|a| a.0 == loc).map_or(0.0, |a| wx.min(a.1)))
                    .sum()
            }
        }
    }

    /// Draws a pair from the maximal coupling of `K(x,·)` and `K(y,·)`.
    pub fn sample(&self, x: f64, y: f64, rng: &mut PathRng) -> (f64, f64) {
        match *self {
            KernelCoupler::ShiftedExponential { rate } => {
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                let d = hi - lo;
                let u = uniform(rng);
                if u < (-rate * d).exp() {
                    let z = hi + exp1(rng) / rate;
                    return (z, z);
                }
                // low copy: lo + Exp(λ) conditioned below hi; high copy: hi + Exp(λ)
                let v = uniform(rng);
                let lo_new = lo - (v * (-rate * d).exp_m1()).ln_1p() / rate;
                let hi_new = hi + exp1(rng) / rate;
                if x <= y {
                    (lo_new, hi_new)
                } else {
                    (hi_new, lo_new)
                }
            }
            _ => {
                let fx = self.atoms_at(x);
                let fy = self.atoms_at(y);
                let overlap: Vec<(f64, f64)> = fx
                    .iter()
                    .filter_map(|&(loc, wx)| {
                        fy.iter().find(|a| a.0 == loc).map(|a| (loc, wx.min(a.1)))
                    })
                    .collect();
                let p: f64 = overlap.iter().map(|o| o.1).sum();
                let u = uniform(rng);
                if u < p {
                    let z = pick(&overlap, u);
                    return (z, z);
                }
                let residual = |own: &[(f64, f64)]| -> Vec<(f64, f64)> {
                    own.iter()
                        .map(|&(loc, w)| {
                            let shared = overlap.iter().find(|o| o.0 == loc).map_or(0.0, |o| o.1);
                            (loc, (w - shared) / (1.0 - p))
                        })
                        .collect()
                };
                let rx = residual(&fx);
                let ry = residual(&fy);
                (pick(&rx, uniform(rng)), pick(&ry, uniform(rng)))
            }
        }
    }
}

fn pick(weighted: &[(f64, f64)], u: f64) -> f64 {
    let mut acc = 0.0;
    for &(loc, w) in weighted {
        acc += w;
        if u < acc {
            return loc;
        }
    }
    weighted
        .iter()
        .rev()
        .find(|a| a.1 > 0.0)
        .map_or(f64::NAN, |a| a.0)
}

struct StickPair<'a> {
    model: &'a ModelSpec,
    flow: &'a Flow,
    clock: JumpClock,
    kernel: &'a KernelCoupler,
    path: usize,
    x: f64,
    y: f64,
    stuck: bool,
    clipped: u64,
    out_x: Vec<f64>,
    out_y: Vec<f64>,
}

impl StickPair<'_> {
    fn resolve(&mut self, jx: bool, jy: bool, rng: &mut PathRng) {
        let jump = self.model.jump();
        if self.stuck {
            if jx {
                self.x = self
                    .flow
                    .clip(jump.target(self.x, uniform(rng)), &mut self.clipped);
                self.y = self.x;
            }
            return;
        }
        match (jx, jy) {
            (true, true) => {
                let (a, b) = self.kernel.sample(self.x, self.y, rng);
                self.x = self.flow.clip(a, &mut self.clipped);
                self.y = self.flow.clip(b, &mut self.clipped);
            }
            (true, false) => {
                self.x = self
                    .flow
                    .clip(jump.target(self.x, uniform(rng)), &mut self.clipped)
            }
            (false, true) => {
                self.y = self
                    .flow
                    .clip(jump.target(self.y, uniform(rng)), &mut self.clipped)
            }
            (false, false) => {}
        }
        if self.x == self.y {
            self.stuck = true;
        }
    }
}

impl Process for StickPair<'_> {
    fn advance(&mut self, h: f64, rng: &mut PathRng) -> Result<()> {
        let (x0, y0) = (self.x, self.y);
        self.x = self
            .flow
            .clip(self.flow.step(x0, h, 0.0), &mut self.clipped);
        self.y = if self.stuck {
            self.x
        } else {
            self.flow
                .clip(self.flow.step(y0, h, 0.0), &mut self.clipped)
        };
        if self.clock == JumpClock::Bernoulli {
            let rate = self.model.rate();
            let px = -(-rate.value(x0) * h).exp_m1();
            let py = -(-rate.value(y0) * h).exp_m1();
            let u = uniform(rng);
            self.resolve(u < px, u < py, rng);
        }
        Ok(())
    }

    fn candidate(&mut self, t: f64, rng: &mut PathRng) -> Result<()> {
        let JumpClock::Thinning(bound) = self.clock else {
            return Ok(());
        };
        let u = uniform(rng);
        let (rx, ry) = (
            self.model.rate().value(self.x),
            self.model.rate().value(self.y),
        );
        check_bound(rx, bound, self.path, t)?;
        check_bound(ry, bound, self.path, t)?;
        self.resolve(u * bound <= rx, u * bound <= ry, rng);
        Ok(())
    }

    fn record(&mut self, k: usize) {
        self.out_x[k] = self.x;
        self.out_y[k] = self.y;
    }

    fn finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Total-variation coupling of a PDMP that sticks the copies on simultaneous jumps.
pub fn couple_tv_sticking(
    model: &ModelSpec,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
) -> Result<CouplingOutcome> {
    cfg.validate()?;
    check_start(model, x0, y0)?;
    if !model.is_pdmp() {
        return Err(Error::Unsupported(
            "sticking coupling needs sigma = 0".into(),
        ));
    }
    let kernel = KernelCoupler::for_law(model.jump())?;
    let clock = JumpClock::for_model(model, cfg.jump_scheme)?;
    let flow = Flow::for_model(model, cfg.dt);
    let dt = step_grid(&flow, clock, cfg.dt);
    let n_ck = cfg.checkpoints.len();
    let rows = par_paths(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        let mut p = StickPair {
            model,
            flow: &flow,
            clock,
            kernel: &kernel,
            path: i,
            x: x0,
            y: y0,
            stuck: x0 == y0,
            clipped: 0,
            out_x: vec![0.0; n_ck],
            out_y: vec![0.0; n_ck],
        };
        let c = Clock {
            dt,
            checkpoints: &cfg.checkpoints,
            event_rate: clock.event_rate(),
            path: i,
        };
        drive(&mut p, &c, &mut rng)?;
        Ok((p.out_x, p.out_y, p.clipped))
    })?;
    Ok(assemble(CouplingKind::Sticking, cfg, x0, y0, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkEstimate {
    pub value: f64,
    pub std_error: f64,
    pub effective_sample_size: f64,
    pub n_paths: usize,
}

struct FkPath<'a> {
    model: &'a ModelSpec,
    flow: &'a Flow,
    h: &'a HDist,
    mean_h: f64,
    clock: JumpClock,
    path: usize,
    y: f64,
    log_w: f64,
    clipped: u64,
    y_t: f64,
}

impl FkPath<'_> {
    /// `(r E[H], −r' x E[1−H])`: rates of the size-biased and the
    /// interval-uniform channels.
    fn rates(&self, x: f64) -> Result<(f64, f64)> {
        let a = self.model.rate().value(x) * self.mean_h;
        let b = -self.model.rate().deriv(x) * x * (1.0 - self.mean_h);
        if b < -1e-12 * (1.0 + a) {
            return Err(Error::Hypothesis {
                field: "rate".into(),
                x,
                reason: format!("auxiliary jump rate -r'(x) x E[1-H] = {b} is negative"),
            });
        }
        Ok((a, b.max(0.0)))
    }

    fn jump(&mut self, channel_a: bool, rng: &mut PathRng) {
        let y = if channel_a {
            self.y * self.h.sample_size_biased(uniform(rng))
        } else {
            let hh = self.h.sample_complement_biased(uniform(rng));
            self.y * (hh + (1.0 - hh) * uniform(rng))
        };
        self.y = self.flow.clip(y, &mut self.clipped);
    }
}

impl Process for FkPath<'_> {
    fn advance(&mut self, h: f64, rng: &mut PathRng) -> Result<()> {
        let y0 = self.y;
        self.log_w -= v_at(self.model, y0) * h;
        let z = if self.flow.has_noise() {
            normal(rng)
        } else {
            0.0
        };
        self.y = self.flow.clip(self.flow.step(y0, h, z), &mut self.clipped);
        if self.clock == JumpClock::Bernoulli {
            let (a, b) = self.rates(y0)?;
            let p = -(-(a + b) * h).exp_m1();
            let (u, v) = (uniform(rng), uniform(rng));
            if u < p {
                self.jump(v * (a + b) < a, rng);
            }
        }
        Ok(())
    }

    fn candidate(&mut self, t: f64, rng: &mut PathRng) -> Result<()> {
        let JumpClock::Thinning(bound) = self.clock else {
            return Ok(());
        };
        let u = uniform(rng);
        let (a, b) = self.rates(self.y)?;
        check_bound(a + b, bound, self.path, t)?;
        if u * bound <= a {
            self.jump(true, rng);
        } else if u * bound <= a + b {
            self.jump(false, rng);
        }
        Ok(())
    }

    fn record(&mut self, _k: usize) {
        self.y_t = self.y;
    }

    fn finite(&self) -> bool {
        self.y.is_finite() && !self.log_w.is_nan()
    }
}

/// Drift `σ' + g` of the auxiliary process.
fn auxiliary_drift(model: &ModelSpec) -> ScalarField {
    match (model.g().affine_coeffs(), model.sigma().affine_coeffs()) {
        (Some((ga, gb)), Some((_, sb))) => ScalarField::affine(ga + sb, gb),
        _ => {
            let (g, s) = (model.g().clone(), model.sigma().clone());
            let (g2, s2) = (g.clone(), s.clone());
            ScalarField::new(
                "sigma' + g",
                move |x| s.deriv(x) + g.value(x),
                move |x| {
                    // not used by the integrator
                    let h = 1e-6 * (1.0 + x.abs());
                    (s2.deriv(x + h) - s2.deriv(x - h)) / (2.0 * h) + g2.deriv(x)
                },
            )
        }
    }
}

/// Estimates `(P_t f)'(x) = E[f'(Y_t) e^{−∫₀ᵗ V(Y_s)ds}]`.
pub fn fk_gradient(
    model: &ModelSpec,
    f_prime: &(dyn Fn(f64) -> f64 + Sync),
    x: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<FkEstimate> {
    let JumpLaw::Multiplicative(h) = model.jump() else {
        return Err(Error::Unsupported(
            "gradient estimator needs multiplicative jumps".into(),
        ));
    };
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be positive, got {t}")));
    }
    if !model.domain().contains(x) {
        return Err(Error::param(
            "x",
            format!("{x} outside domain {}", model.domain()),
        ));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.horizon = t;
    run_cfg.checkpoints = vec![t];
    run_cfg.validate()?;
    if let Some(&z) = monotone_grid(model)
        .iter()
        .find(|&&z| model.rate().deriv(z) > 1e-12)
    {
        return Err(Error::Hypothesis {
            field: "rate".into(),
            x: z,
            reason: format!(
                "r'({z}) = {} > 0 makes the auxiliary jump rate negative",
                model.rate().deriv(z)
            ),
        });
    }
    let mean_h = h.mean();
    let clock = if !model.has_jumps() {
        JumpClock::None
    } else {
        match cfg.jump_scheme {
            crate::simulate::JumpScheme::PerStepBernoulli => JumpClock::Bernoulli,
            crate::simulate::JumpScheme::ExactThinning { bound } => {
                let b = bound
                    .or_else(|| model.rate().constant_value().map(|c| c * mean_h))
                    .ok_or_else(|| {
                        Error::param(
                            "jump_scheme",
                            "exact thinning of the auxiliary process needs a bound on r E[H] - r' x E[1-H]",
                        )
                    })?;
                JumpClock::Thinning(b)
            }
        }
    };
    let drift = auxiliary_drift(model);
    let flow = Flow::new(&drift, model.sigma(), model.domain(), cfg.dt);
    let samples = par_paths(run_cfg.n_paths, |i| {
        let mut rng = path_rng(run_cfg.seed, i);
        let mut p = FkPath {
            model,
            flow: &flow,
            h,
            mean_h,
            clock,
            path: i,
            y: x,
            log_w: 0.0,
            clipped: 0,
            y_t: x,
        };
        let c = Clock {
            dt: Some(run_cfg.dt),
            checkpoints: &run_cfg.checkpoints,
            event_rate: clock.event_rate(),
            path: i,
        };
        drive(&mut p, &c, &mut rng)?;
        Ok((f_prime(p.y_t), p.log_w.exp()))
    })?;
    let values: Vec<f64> = samples.iter().map(|(fp, w)| fp * w).collect();
    let (value, std_error) = mean_se(&values);
    let sw: f64 = samples.iter().map(|s| s.1).sum();
    let sw2: f64 = samples.iter().map(|s| s.1 * s.1).sum();
    Ok(FkEstimate {
        value,
        std_error,
        effective_sample_size: if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 },
        n_paths: run_cfg.n_paths,
    })
}

/// Common-random-numbers central difference `(P_t f(x+δ) − P_t f(x−δ))/(2δ)`.
pub fn semigroup_gradient_fd(
    model: &ModelSpec,
    f: &(dyn Fn(f64) -> f64 + Sync),
    x: f64,
    delta: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<FkEstimate> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", "must be positive"));
    }
    let (lo, hi) = (x - delta, x + delta);
    if !model.domain().contains(lo) || !model.domain().contains(hi) {
        return Err(Error::param(
            "delta",
            format!("x ± delta leaves the domain {}", model.domain()),
        ));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.horizon = t;
    run_cfg.checkpoints = vec![t];
    let out = couple_synchronous(model, lo, hi, &run_cfg)?;
    let values: Vec<f64> = (0..out.n_paths)
        .map(|i| (f(out.y[i]) - f(out.x[i])) / (2.0 * delta))
        .collect();
    let (value, std_error) = mean_se(&values);
    Ok(FkEstimate {
        value,
        std_error,
        effective_sample_size: out.n_paths as f64,
        n_paths: out.n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{contraction_profile, empirical_tv, ks_critical, ks_two_sample};
    use crate::model::*;
    use crate::simulate::{simulate_ensemble, Initial};

    fn cfg(dt: f64, cps: &[f64], n: usize, seed: u64) -> SimConfig {
        SimConfig::new(dt, cps.to_vec(), n, seed)
    }

    #[test]
    fn ou_difference_is_deterministic() {
        let ou = make_ou(1.0).unwrap();
        let out = couple_synchronous(&ou, 0.0, 1.0, &cfg(1e-3, &[0.5, 1.0, 2.0], 50, 1)).unwrap();
        for i in 0..50 {
            for (k, t) in [0.5f64, 1.0, 2.0].iter().enumerate() {
                assert!((out.dist(i, k) - (-t).exp()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_starts_stay_together() {
        let tcp = make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap();
        let out = couple_synchronous(
            &tcp,
            2.0,
            2.0,
            &cfg(1e-2, &[1.0, 2.0], 100, 1).with_bound(50.0),
        )
        .unwrap();
        assert!(out.x.iter().zip(&out.y).all(|(a, b)| a == b));
        let st = make_storage(1.0, 1.0, ScalarField::constant(2.0)).unwrap();
        let out = couple_tv_sticking(&st, 1.0, 1.0, &cfg(1e-2, &[0.0, 1.0], 100, 1)).unwrap();
        assert!((0..100).all(|i| out.is_equal(i, 0) && out.is_equal(i, 1)));
    }

    #[test]
    fn non_monotone_model_rejected() {
        let wavy = make_tcp(
            ScalarField::new("sin x + 2", |x| x.sin() + 2.0, f64::cos),
            HDist::Dirac(0.5),
        )
        .unwrap();
        let e = couple_synchronous(&wavy, 0.0, 1.0, &cfg(1e-2, &[1.0], 4, 0).with_bound(3.0))
            .unwrap_err();
        assert!(matches!(e, Error::Hypothesis { .. }));
        assert!(couple_synchronous_unchecked(
            &wavy,
            0.0,
            1.0,
            &cfg(1e-2, &[1.0], 4, 0).with_bound(3.0)
        )
        .is_ok());
    }

    #[test]
    fn marginals_match_single_simulation() {
        let tcp = make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap();
        let c = cfg(1e-2, &[2.0], 10_000, 21).with_bound(40.0);
        let out = couple_synchronous(&tcp, 0.0, 1.0, &c).unwrap();
        let mut c2 = c.clone();
        c2.seed = 99;
        let single_x = simulate_ensemble(&tcp, &Initial::Dirac(0.0), &c2).unwrap();
        let single_y = simulate_ensemble(&tcp, &Initial::Dirac(1.0), &c2).unwrap();
        let crit = ks_critical(10_000, 10_000, 0.01);
        assert!(ks_two_sample(&out.x_column(0), &single_x.column(0)).unwrap() < crit);
        assert!(ks_two_sample(&out.y_column(0), &single_y.column(0)).unwrap() < crit);
    }

    #[test]
    fn maximal_coupling_exponential_probability() {
        let k = KernelCoupler::ShiftedExponential { rate: 1.5 };
        let (x, y) = (0.2, 0.9);
        // TV(x+Exp, y+Exp) by midpoint integration of |f_x − f_y|/2
        let n = 200_000;
        let top = 40.0;
        let step = top / n as f64;
        let dens = |z: f64, s: f64| {
            if z >= s {
                1.5 * (-1.5 * (z - s)).exp()
            } else {
                0.0
            }
        };
        let tv: f64 = (0..n)
            .map(|i| {
                let z = (i as f64 + 0.5) * step;
                (dens(z, x) - dens(z, y)).abs()
            })
            .sum::<f64>()
            * step
            / 2.0;
        assert!((k.stick_probability(x, y) - (1.0 - tv)).abs() < 1e-4);

        let mut rng = path_rng(3, 0);
        let m = 200_000;
        let mut same = 0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..m {
            let (a, b) = k.sample(x, y, &mut rng);
            if a == b {
                same += 1;
            }
            assert!(a >= x && b >= y);
            sx += a;
            sy += b;
        }
        let p = same as f64 / m as f64;
        assert!((p - k.stick_probability(x, y)).abs() < 4e-3);
        // marginals keep mean s + 1/λ
        assert!((sx / m as f64 - (x + 1.0 / 1.5)).abs() < 1e-2);
        assert!((sy / m as f64 - (y + 1.0 / 1.5)).abs() < 1e-2);
    }

    #[test]
    fn maximal_coupling_atoms() {
        let k = KernelCoupler::for_law(&JumpLaw::AdditiveDown(HDist::Mixture(vec![
            Atom {
                weight: 0.5,
                value: 0.0,
            },
            Atom {
                weight: 0.5,
                value: 1.0,
            },
        ])))
        .unwrap();
        // x − 1 = y − 0 when x = y + 1: overlap 0.5
        assert_eq!(k.stick_probability(2.0, 1.0), 0.5);
        let mut rng = path_rng(4, 0);
        for _ in 0..1000 {
            let (a, b) = k.sample(2.0, 1.0, &mut rng);
            assert!(a == b && a == 1.0 || (a, b) == (2.0, 0.0));
        }
        assert!(
            KernelCoupler::for_law(&JumpLaw::Multiplicative(HDist::Uniform {
                lo: 0.0,
                hi: 1.0
            }))
            .is_err()
        );
        let tcp_u = make_tcp(
            ScalarField::constant(1.0),
            HDist::Uniform { lo: 0.1, hi: 0.9 },
        )
        .unwrap();
        assert!(matches!(
            couple_tv_sticking(&tcp_u, 0.0, 1.0, &cfg(1e-2, &[1.0], 2, 0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn sticking_tv_starts_at_one() {
        let st = make_storage(1.0, 1.0, ScalarField::constant(2.0)).unwrap();
        let out = couple_tv_sticking(&st, 0.0, 1.0, &cfg(1e-2, &[0.0, 3.0], 20_000, 5)).unwrap();
        assert_eq!(empirical_tv(&out, 0).0, 1.0);
        let (tv3, se) = empirical_tv(&out, 1);
        assert!(tv3 < 1.0 && se > 0.0);
        let e = couple_synchronous(&st, 0.0, 0.0, &cfg(1e-2, &[1.0], 3, 0)).unwrap();
        assert!(contraction_profile(&e).is_err());
    }

    #[test]
    fn fd_gradient_examples() {
        let ou = make_ou(1.0).unwrap();
        let id = |x: f64| x;
        let est =
            semigroup_gradient_fd(&ou, &id, 0.3, 0.1, 1.0, &cfg(1e-3, &[1.0], 20, 2)).unwrap();
        assert!((est.value - (-1.0f64).exp()).abs() < 1e-10);
        assert!(est.std_error < 1e-10);

        let bm = make_langevin(&Potential::new(|_| 0.0, |_| 0.0, |_| 0.0)).unwrap();
        let sq = |x: f64| x * x;
        let est =
            semigroup_gradient_fd(&bm, &sq, 0.0, 0.1, 1.0, &cfg(1e-2, &[1.0], 20_000, 2)).unwrap();
        assert!(est.value.abs() < 3.0 * est.std_error + 1e-12);

        let tcp = make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap();
        let est = semigroup_gradient_fd(
            &tcp,
            &id,
            5.0,
            0.5,
            1.0,
            &cfg(1e-2, &[1.0], 20_000, 3).with_bound(60.0),
        )
        .unwrap();
        assert!(est.value > 0.0 && est.value <= (-0.5f64).exp() + 3.0 * est.std_error);
    }

    #[test]
    fn fk_gradient_scope_and_ou() {
        let tcp = make_tcp(ScalarField::affine(1.0, 1.0), HDist::Dirac(0.5)).unwrap();
        let one = |_: f64| 1.0;
        assert!(matches!(
            fk_gradient(&tcp, &one, 1.0, 1.0, &cfg(1e-2, &[1.0], 10, 0)),
            Err(Error::Hypothesis { .. })
        ));
        let st = make_storage(1.0, 1.0, ScalarField::constant(2.0)).unwrap();
        assert!(fk_gradient(&st, &one, 1.0, 1.0, &cfg(1e-2, &[1.0], 10, 0)).is_err());

        let ou = make_ou(1.0).unwrap();
        let est = fk_gradient(&ou, &one, 0.5, 1.5, &cfg(1e-3, &[1.0], 50, 0)).unwrap();
        assert!((est.value - (-1.5f64).exp()).abs() < 1e-12);
        assert!((est.effective_sample_size - 50.0).abs() < 1e-9);
    }

    #[test]
    fn fk_matches_fd_with_decreasing_rate() {
        let rate = ScalarField::new("3/(1+x)", |x| 3.0 / (1.0 + x), |x| -3.0 / (1.0 + x).powi(2));
        let fb = make_feller_bt(1.0, 1.0, rate, HDist::Dirac(0.5)).unwrap();
        let c = cfg(2e-3, &[1.0], 40_000, 12)
            .with_scheme(crate::simulate::JumpScheme::PerStepBernoulli);
        let fk = fk_gradient(&fb, &|x: f64| 1.0 / x.cosh().powi(2), 1.0, 1.0, &c).unwrap();
        let fd = semigroup_gradient_fd(&fb, &f64::tanh, 1.0, 0.05, 1.0, &c).unwrap();
        let z = (fk.value - fd.value) / (fk.std_error.powi(2) + fd.std_error.powi(2)).sqrt();
        assert!(z.abs() < 3.0, "fk {:?} fd {:?}", fk, fd);
        assert!(fk.effective_sample_size <= fk.n_paths as f64 + 1e-9);
    }
}
