// SPDX-License-Identifier: Apache-2.0

//! Pathwise simulation.
//!
//! Between jumps a path follows `dX = g(X)dt + √(2σ(X)) dB`. Affine drifts
//! are integrated exactly (mean flow and, for constant `σ`, the exact
//! Gaussian transition); other drifts use Euler–Maruyama. Jumps come either
//! from thinning a rate-`r̄` Poisson clock or from a per-step Bernoulli trial.
//! Steps are split at checkpoints and candidate event times, so recorded
//! values are taken exactly at the requested times.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HDist, Interval, JumpLaw, ModelSpec, ScalarField};
use crate::rng::{exp1, normal, path_rng, uniform, PathRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpScheme {
    /// Candidate events at rate `bound` (or the model's global rate bound),
    /// accepted with probability `r(x)/bound`.
    ExactThinning {
        #[serde(default)]
        bound: Option<f64>,
    },
    /// Jump with probability `1 − exp(−r(x)dt)` in each step.
    PerStepBernoulli,
}

impl Default for JumpScheme {
    fn default() -> Self {
        JumpScheme::ExactThinning { bound: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub checkpoints: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub jump_scheme: JumpScheme,
}

impl SimConfig {
    /// Horizon set to the last checkpoint, exact thinning.
    pub fn new(dt: f64, checkpoints: Vec<f64>, n_paths: usize, seed: u64) -> Self {
        let horizon = checkpoints.last().copied().unwrap_or(0.0);
        SimConfig {
            dt,
            horizon,
            checkpoints,
            n_paths,
            seed,
            jump_scheme: JumpScheme::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: JumpScheme) -> Self {
        self.jump_scheme = scheme;
        self
    }

    pub fn with_bound(self, bound: f64) -> Self {
        self.with_scheme(JumpScheme::ExactThinning { bound: Some(bound) })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::param("checkpoints", "must not be empty"));
        }
        if self
            .checkpoints
            .iter()
            .any(|&t| !(t >= 0.0 && t <= self.horizon))
        {
            return Err(Error::param("checkpoints", "must lie in [0, horizon]"));
        }
        if self.checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("checkpoints", "must be sorted"));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be at least 1"));
        }
        if let JumpScheme::ExactThinning { bound: Some(b) } = self.jump_scheme {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::param(
                    "jump_scheme.bound",
                    format!("must be positive, got {b}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Dirac(f64),
    /// Path `i` starts from `samples[i % len]`.
    Samples(Vec<f64>),
}

impl Initial {
    fn validate(&self, domain: &Interval) -> Result<()> {
        let bad = match self {
            Initial::Dirac(x) => (!domain.contains(*x)).then_some(*x),
            Initial::Samples(v) if v.is_empty() => return Err(Error::Empty("initial samples")),
            Initial::Samples(v) => v.iter().copied().find(|x| !domain.contains(*x)),
        };
        match bad {
            Some(x) => Err(Error::param(
                "initial",
                format!("{x} outside domain {domain}"),
            )),
            None => Ok(()),
        }
    }

    fn start(&self, path: usize) -> f64 {
        match self {
            Initial::Dirac(x) => *x,
            Initial::Samples(v) => v[path % v.len()],
        }
    }
}

/// Checkpoint values of an ensemble, one row per path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub checkpoint_times: Vec<f64>,
    /// Row-major `n_paths × n_checkpoints`.
    pub values: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: JumpScheme,
    /// Number of steps whose end state left the domain and was clipped back.
    pub clipped: u64,
}

impl PathEnsemble {
    pub fn n_checkpoints(&self) -> usize {
        self.checkpoint_times.len()
    }

    pub fn value(&self, path: usize, k: usize) -> f64 {
        self.values[path * self.n_checkpoints() + k]
    }

    pub fn row(&self, path: usize) -> &[f64] {
        let n = self.n_checkpoints();
        &self.values[path * n..(path + 1) * n]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.value(i, k)).collect()
    }

    /// Mean and standard error at checkpoint `k`.
    pub fn mean_se(&self, k: usize) -> (f64, f64) {
        crate::metrics::mean_se(&self.column(k))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_csv(w, &self.checkpoint_times, self.n_paths, |i, k| {
            self.value(i, k)
        })
    }
}

pub(crate) fn write_matrix_csv<W: Write, T: ToString>(
    w: W,
    times: &[f64],
    rows: usize,
    cell: impl Fn(usize, usize) -> T,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(times.iter().map(|t| format!("t={t}")))
        .map_err(csv_err)?;
    for i in 0..rows {
        out.write_record((0..times.len()).map(|k| cell(i, k).to_string()))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum DriftKind {
    Affine { a: f64, b: f64 },
    General,
}

#[derive(Debug, Clone, Copy)]
enum NoiseKind {
    None,
    Constant(f64),
    State,
}

/// Continuous part of the motion between jumps.
#[derive(Clone)]
pub(crate) struct Flow {
    drift: ScalarField,
    sigma: ScalarField,
    domain: Interval,
    drift_kind: DriftKind,
    noise: NoiseKind,
    dt: f64,
    /// `(e^{b dt} − 1, exact noise sd over dt)` for affine drifts.
    cached: (f64, f64),
}

impl Flow {
    pub(crate) fn new(drift: &ScalarField, sigma: &ScalarField, domain: Interval, dt: f64) -> Self {
        let drift_kind = match drift.affine_coeffs() {
            Some((a, b)) => DriftKind::Affine { a, b },
            None => DriftKind::General,
        };
        let noise = match sigma.constant_value() {
            Some(0.0) => NoiseKind::None,
            Some(s) => NoiseKind::Constant(s),
            None => NoiseKind::State,
        };
        let mut flow = Flow {
            drift: drift.clone(),
            sigma: sigma.clone(),
            domain,
            drift_kind,
            noise,
            dt,
            cached: (0.0, 0.0),
        };
        flow.cached = flow.affine_terms(dt);
        flow
    }

    pub(crate) fn for_model(model: &ModelSpec, dt: f64) -> Self {
        Self::new(model.g(), model.sigma(), model.domain(), dt)
    }

    /// Deterministic and exactly integrable: paths can skip to the next event.
    pub(crate) fn exact_pdmp(&self) -> bool {
        matches!(self.noise, NoiseKind::None) && matches!(self.drift_kind, DriftKind::Affine { .. })
    }

    pub(crate) fn has_noise(&self) -> bool {
        !matches!(self.noise, NoiseKind::None)
    }

    fn affine_terms(&self, h: f64) -> (f64, f64) {
        let DriftKind::Affine { b, .. } = self.drift_kind else {
            return (0.0, 0.0);
        };
        let em1 = (b * h).exp_m1();
        let sd = match self.noise {
            NoiseKind::Constant(s) if b == 0.0 => (2.0 * s * h).sqrt(),
            NoiseKind::Constant(s) => (s * (2.0 * b * h).exp_m1() / b).sqrt(),
            _ => 0.0,
        };
        (em1, sd)
    }

    /// One step of length `h` driven by the standard normal `z` (ignored
    /// without noise). The result is not clipped.
    #[inline]
    pub(crate) fn step(&self, x: f64, h: f64, z: f64) -> f64 {
        match self.drift_kind {
            DriftKind::Affine { a, b } => {
                let (em1, sd) = if h == self.dt {
                    self.cached
                } else {
                    self.affine_terms(h)
                };
                let mean = x + x * em1 + if b == 0.0 { a * h } else { a * em1 / b };
                match self.noise {
                    NoiseKind::None => mean,
                    NoiseKind::Constant(_) => mean + sd * z,
                    NoiseKind::State => mean + (2.0 * self.sigma.value(x).max(0.0) * h).sqrt() * z,
                }
            }
            DriftKind::General => {
                let mut y = x + self.drift.value(x) * h;
                if self.has_noise() {
                    y += (2.0 * self.sigma.value(x).max(0.0) * h).sqrt() * z;
                }
                y
            }
        }
    }

    /// Clips into the domain, counting the incident.
    #[inline]
    pub(crate) fn clip(&self, x: f64, clipped: &mut u64) -> f64 {
        if self.domain.contains(x) || x.is_nan() {
            x
        } else {
            *clipped += 1;
            self.domain.clip(x)
        }
    }
}

/// How jump events are generated at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum JumpClock {
    None,
    Thinning(f64),
    Bernoulli,
}

impl JumpClock {
    pub(crate) fn for_model(model: &ModelSpec, scheme: JumpScheme) -> Result<Self> {
        if !model.has_jumps() {
            return Ok(JumpClock::None);
        }
        match scheme {
            JumpScheme::PerStepBernoulli => Ok(JumpClock::Bernoulli),
            JumpScheme::ExactThinning { bound } => bound
                .or(model.rate_global_bound())
                .map(JumpClock::Thinning)
                .ok_or_else(|| {
                    Error::param(
                        "jump_scheme",
                        "exact thinning needs a rate bound (jump_scheme.exact_thinning.bound or the model rate_bound)",
                    )
                }),
        }
    }

    pub(crate) fn event_rate(&self) -> Option<f64> {
        match self {
            JumpClock::Thinning(b) => Some(*b),
            _ => None,
        }
    }
}

/// Rejects a rate above the thinning bound.
#[inline]
pub(crate) fn check_bound(rate: f64, bound: f64, path: usize, time: f64) -> Result<()> {
    if rate > bound * (1.0 + 1e-12) {
        Err(Error::ThinningBound {
            path,
            time,
            rate,
            bound,
        })
    } else {
        Ok(())
    }
}

/// A path (or tuple of coupled paths) advanced by [`drive`].
pub(crate) trait Process {
    /// Continuous motion over `h`, plus any per-step jump trial.
    fn advance(&mut self, h: f64, rng: &mut PathRng) -> Result<()>;
    /// A candidate event of the dominating Poisson clock at time `t`.
    fn candidate(&mut self, t: f64, rng: &mut PathRng) -> Result<()>;
    fn record(&mut self, k: usize);
    fn finite(&self) -> bool;
}

pub(crate) struct Clock<'a> {
    /// Step grid; `None` lets the process move straight to the next event.
    pub dt: Option<f64>,
    pub checkpoints: &'a [f64],
    pub event_rate: Option<f64>,
    pub path: usize,
}

pub(crate) fn drive<P: Process>(p: &mut P, clock: &Clock<'_>, rng: &mut PathRng) -> Result<()> {
    let cps = clock.checkpoints;
    let mut k = 0;
    while k < cps.len() && cps[k] <= 0.0 {
        p.record(k);
        k += 1;
    }
    let mut t = 0.0;
    let mut grid_i: u64 = 0;
    let mut next_event = match clock.event_rate {
        Some(rate) => exp1(rng) / rate,
        None => f64::INFINITY,
    };
    while k < cps.len() {
        let next_grid = clock
            .dt
            .map_or(f64::INFINITY, |dt| (grid_i + 1) as f64 * dt);
        let target = next_grid.min(cps[k]).min(next_event);
        let h = target - t;
        if h > 0.0 {
            p.advance(h, rng)?;
        }
        t = target;
        if target == next_grid {
            grid_i += 1;
        }
        if target == next_event {
            p.candidate(t, rng)?;
            next_event = t + exp1(rng) / clock.event_rate.unwrap_or(f64::INFINITY);
        }
        if !p.finite() {
            return Err(Error::NonFinite {
                path: clock.path,
                time: t,
            });
        }
        while k < cps.len() && cps[k] <= t {
            p.record(k);
            k += 1;
        }
    }
    Ok(())
}

/// Step grid for a model/clock pair: exact PDMPs under thinning need none.
pub(crate) fn step_grid(flow: &Flow, clock: JumpClock, dt: f64) -> Option<f64> {
    let skip = flow.exact_pdmp() && clock != JumpClock::Bernoulli;
    (!skip).then_some(dt)
}

/// Runs `f` for every path in parallel and returns results in path order;
/// the reported error is the one with the smallest path index.
pub(crate) fn par_paths<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(&f).collect();
    results.into_iter().collect()
}

struct SinglePath<'a> {
    model: &'a ModelSpec,
    flow: &'a Flow,
    clock: JumpClock,
    path: usize,
    x: f64,
    clipped: u64,
    out: Vec<f64>,
}

impl SinglePath<'_> {
    fn jump(&mut self, theta: f64) {
        let y = self.model.jump().target(self.x, theta);
        self.x = self.flow.clip(y, &mut self.clipped);
    }
}

impl Process for SinglePath<'_> {
    fn advance(&mut self, h: f64, rng: &mut PathRng) -> Result<()> {
        let x0 = self.x;
        let z = if self.flow.has_noise() {
            normal(rng)
        } else {
            0.0
        };
        self.x = self.flow.clip(self.flow.step(x0, h, z), &mut self.clipped);
        if self.clock == JumpClock::Bernoulli {
            let p = -(-self.model.rate().value(x0) * h).exp_m1();
            let (u, theta) = (uniform(rng), uniform(rng));
            if u < p {
                self.jump(theta);
            }
        }
        Ok(())
    }

    fn candidate(&mut self, t: f64, rng: &mut PathRng) -> Result<()> {
        let JumpClock::Thinning(bound) = self.clock else {
            return Ok(());
        };
        let (u, theta) = (uniform(rng), uniform(rng));
        let r = self.model.rate().value(self.x);
        check_bound(r, bound, self.path, t)?;
        if u * bound <= r {
            self.jump(theta);
        }
        Ok(())
    }

    fn record(&mut self, k: usize) {
        self.out[k] = self.x;
    }

    fn finite(&self) -> bool {
        self.x.is_finite()
    }
}

pub fn simulate_ensemble(
    model: &ModelSpec,
    initial: &Initial,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    initial.validate(&model.domain())?;
    let clock = JumpClock::for_model(model, cfg.jump_scheme)?;
    let flow = Flow::for_model(model, cfg.dt);
    let dt = step_grid(&flow, clock, cfg.dt);
    let n_ck = cfg.checkpoints.len();

    let rows = par_paths(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        let mut p = SinglePath {
            model,
            flow: &flow,
            clock,
            path: i,
            x: initial.start(i),
            clipped: 0,
            out: vec![0.0; n_ck],
        };
        let c = Clock {
            dt,
            checkpoints: &cfg.checkpoints,
            event_rate: clock.event_rate(),
            path: i,
        };
        drive(&mut p, &c, &mut rng)?;
        Ok((p.out, p.clipped))
    })?;

    let clipped = rows.iter().map(|r| r.1).sum();
    Ok(PathEnsemble {
        checkpoint_times: cfg.checkpoints.clone(),
        values: rows.into_iter().flat_map(|r| r.0).collect(),
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        scheme: cfg.jump_scheme,
        clipped,
    })
}

/// States of the embedded chain, one row of `n_steps + 1` states per path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStates {
    pub n_paths: usize,
    pub n_steps: usize,
    pub values: Vec<f64>,
}

impl ChainStates {
    pub fn state(&self, path: usize, step: usize) -> f64 {
        self.values[path * (self.n_steps + 1) + step]
    }

    pub fn column(&self, step: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.state(i, step)).collect()
    }
}

pub type Eval<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

fn check_chain_inputs(
    r_anti: Eval<'_>,
    r_inv: Eval<'_>,
    jump_h: &HDist,
    starts: &[f64],
) -> Result<()> {
    JumpLaw::Multiplicative(jump_h.clone()).validate()?;
    if let Some(&x) = starts.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::param(
            "x0",
            format!("must be a finite non-negative state, got {x}"),
        ));
    }
    let top = starts.iter().copied().fold(10.0, f64::max);
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=100 {
        let x = top * i as f64 / 100.0;
        let rx = r_anti(x);
        if !(rx > prev) {
            return Err(Error::Hypothesis {
                field: "R".into(),
                x,
                reason: "antiderivative must be strictly increasing".into(),
            });
        }
        prev = rx;
        let back = r_inv(rx);
        if !((back - x).abs() <= 1e-10 * (1.0 + x.abs())) {
            return Err(Error::Hypothesis {
                field: "R_inv".into(),
                x,
                reason: format!("R_inv(R(x)) = {back}"),
            });
        }
    }
    Ok(())
}

fn chain_run(
    r_anti: Eval<'_>,
    r_inv: Eval<'_>,
    jump_h: &HDist,
    starts: &[f64],
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ChainStates>> {
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be at least 1"));
    }
    check_chain_inputs(r_anti, r_inv, jump_h, starts)?;
    let rows = par_paths(n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let mut xs: Vec<f64> = starts.to_vec();
        let mut out: Vec<Vec<f64>> = starts
            .iter()
            .map(|&x| {
                let mut v = Vec::with_capacity(n_steps + 1);
                v.push(x);
                v
            })
            .collect();
        for _ in 0..n_steps {
            let e = exp1(&mut rng);
            let h = jump_h.sample(uniform(&mut rng));
            for (x, o) in xs.iter_mut().zip(out.iter_mut()) {
                *x = h * r_inv(r_anti(*x) + e);
                o.push(*x);
            }
        }
        Ok(out)
    })?;
    Ok((0..starts.len())
        .map(|c| ChainStates {
            n_paths,
            n_steps,
            values: rows.iter().flat_map(|r| r[c].iter().copied()).collect(),
        })
        .collect())
}

/// Iterates `X̂_{n+1} = H R⁻¹(R(X̂_n) + E)` with unit exponentials `E` and `H ~ 𝓗`.
pub fn simulate_embedded_chain(
    r_anti: Eval<'_>,
    r_inv: Eval<'_>,
    jump_h: &HDist,
    x0: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ChainStates> {
    Ok(chain_run(r_anti, r_inv, jump_h, &[x0], n_steps, n_paths, seed)?.remove(0))
}

/// Two chains from `x0` and `y0` sharing every `(E, H)` draw.
#[allow(clippy::too_many_arguments)]
pub fn simulate_embedded_pair(
    r_anti: Eval<'_>,
    r_inv: Eval<'_>,
    jump_h: &HDist,
    x0: f64,
    y0: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(ChainStates, ChainStates)> {
    let mut v = chain_run(r_anti, r_inv, jump_h, &[x0, y0], n_steps, n_paths, seed)?;
    let y = v.pop().expect("two chains");
    let x = v.pop().expect("two chains");
    Ok((x, y))
}

struct LevyPath<'a> {
    jump_h: &'a HDist,
    /// `e^{−L}`
    scale: f64,
    y: f64,
    dt: f64,
    sqrt_2dt: f64,
    out: Vec<f64>,
}

impl Process for LevyPath<'_> {
    fn advance(&mut self, h: f64, rng: &mut PathRng) -> Result<()> {
        let s = if h == self.dt {
            self.sqrt_2dt
        } else {
            (2.0 * h).sqrt()
        };
        self.y += self.scale * s * normal(rng);
        Ok(())
    }

    fn candidate(&mut self, _t: f64, rng: &mut PathRng) -> Result<()> {
        self.scale *= self.jump_h.sample(uniform(rng));
        Ok(())
    }

    fn record(&mut self, k: usize) {
        self.out[k] = self.y;
    }

    fn finite(&self) -> bool {
        self.y.is_finite()
    }
}

/// `Y_t = ∫₀ᵗ e^{−L_s} √2 dB_s` with `L` compound Poisson of rate `r` and
/// increments `−ln H`. The noise carries the same `√2` as every diffusion
/// here (unit coefficient of `f''`).
pub fn simulate_levy_integral(
    r_const: f64,
    jump_h: &HDist,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    if !(r_const > 0.0 && r_const.is_finite()) {
        return Err(Error::param(
            "r",
            format!("must be positive, got {r_const}"),
        ));
    }
    JumpLaw::Multiplicative(jump_h.clone()).validate()?;
    let n_ck = cfg.checkpoints.len();
    let rows = par_paths(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        let mut p = LevyPath {
            jump_h,
            scale: 1.0,
            y: 0.0,
            dt: cfg.dt,
            sqrt_2dt: (2.0 * cfg.dt).sqrt(),
            out: vec![0.0; n_ck],
        };
        let c = Clock {
            dt: Some(cfg.dt),
            checkpoints: &cfg.checkpoints,
            event_rate: Some(r_const),
            path: i,
        };
        drive(&mut p, &c, &mut rng)?;
        Ok(p.out)
    })?;
    Ok(PathEnsemble {
        checkpoint_times: cfg.checkpoints.clone(),
        values: rows.into_iter().flatten().collect(),
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        scheme: JumpScheme::ExactThinning {
            bound: Some(r_const),
        },
        clipped: 0,
    })
}
