// SPDX-License-Identifier: Apache-2.0

//! One function per experiment kind. Each returns its artifacts; nothing is
//! written until the whole experiment has succeeded.

use ergo_core::analytic::{
    embedded_density_bin_edges, embedded_density_normalization, embedded_density_support_end,
    langevin_rate, levy_integral_moments, schrodinger_ground_state, tcp_embedded_invariant_density,
    LangevinRate,
};
use ergo_core::config::{
    parse_matrix_csv, DensityDoc, ExperimentConfig, ExperimentKind, Matrix, MetricKind, ModelDoc,
    PotentialDoc, ReportFormat,
};
use ergo_core::coupling::{
    couple_synchronous, couple_tv_sticking, fk_gradient, semigroup_gradient_fd,
};
use ergo_core::curvature::{
    curvature_rho, curvature_rho_with_tail, tv_bound, tv_local_bound, DEFAULT_GRID,
};
use ergo_core::expr::Expr;
use ergo_core::metrics::{
    check_exponential_bound, chi_square_critical, chi_square_statistic, contraction_profile,
    empirical_tv, fit_decay_rate_opts, mean_se, sample_moments, wasserstein_p_1d, DecayFit,
    ProfilePoint,
};
use ergo_core::model::{make_langevin, validate_monotone, HDist, Interval};
use ergo_core::simulate::{
    simulate_embedded_chain, simulate_embedded_pair, simulate_ensemble, simulate_levy_integral,
    Initial,
};
use ergo_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::Artifacts;
use crate::{CliResult, Failure};

/// Tolerance of the density normalization gate.
const NORMALIZATION_TOLERANCE: f64 = 1e-6;
const EIGEN_GRID: usize = 4001;

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let mut arts = Artifacts::default();
    let result = match kind {
        ExperimentKind::Curvature => curvature(cfg, &mut arts)?,
        ExperimentKind::TvBound => tv(cfg, &mut arts)?,
        ExperimentKind::Simulate => simulate(cfg, &mut arts)?,
        ExperimentKind::Couple => couple(cfg, &mut arts)?,
        ExperimentKind::CoupleTv => couple_tv(cfg, &mut arts)?,
        ExperimentKind::FkGrad => fk(cfg)?,
        ExperimentKind::DecayStudy => decay_study(cfg, &mut arts)?,
        ExperimentKind::MomentsStudy => moments_study(cfg, &mut arts)?,
        ExperimentKind::MomentsOracle => moments_oracle(cfg)?,
        ExperimentKind::Eigen => eigen(cfg, &mut arts)?,
        ExperimentKind::EigenStudy => eigen_study(cfg, &mut arts)?,
        ExperimentKind::EmbeddedDensity => embedded_density(cfg, &mut arts)?,
        ExperimentKind::EmbeddedStudy => embedded_study(cfg)?,
        ExperimentKind::Metrics => metrics(cfg)?,
    };
    let mut result = result;
    result["experiment"] = json!(kind.name());
    if cfg.format == ReportFormat::Csv {
        arts.add("result.csv", summary_csv(&result));
    }
    arts.add_json("result.json", &result)?;
    Ok(arts)
}

/// Top-level scalar fields of a result as `key,value` rows.
fn summary_csv(result: &Value) -> Vec<u8> {
    let mut s = String::from("key,value\n");
    if let Value::Object(map) = result {
        for (k, v) in map {
            let cell = match v {
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                Value::String(t) => t.replace(',', ";"),
                Value::Null => String::new(),
                _ => continue,
            };
            s.push_str(&format!("{k},{cell}\n"));
        }
    }
    s.into_bytes()
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| Failure::Runtime(e.to_string()))
}

fn fn_from(src: &Option<String>, name: &str) -> CliResult<Expr> {
    let src = src
        .as_ref()
        .ok_or_else(|| Failure::Validation(format!("{name}: required for this experiment")))?;
    Ok(Expr::parse(src).map_err(Error::from)?)
}

fn need<T: Copy>(v: Option<T>, name: &str) -> CliResult<T> {
    Ok(ExperimentConfig::require(v, name)?)
}

fn initial(cfg: &ExperimentConfig) -> CliResult<Initial> {
    match (&cfg.initial_samples, cfg.x0) {
        (Some(v), _) => Ok(Initial::Samples(v.clone())),
        (None, Some(x)) => Ok(Initial::Dirac(x)),
        (None, None) => Err(Failure::Validation(
            "x0 or initial_samples: required for this experiment".into(),
        )),
    }
}

fn curvature(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let window = cfg.window_or(model.domain())?;
    let n_grid = cfg.n_grid.unwrap_or(DEFAULT_GRID);
    let rep = curvature_rho_with_tail(&model, window, n_grid, cfg.tail)?;
    let mono = validate_monotone(&model, &window.grid(101)?)?;
    let rows: Vec<Vec<f64>> = rep
        .grid
        .iter()
        .zip(&rep.v_values)
        .map(|(x, v)| vec![*x, *v])
        .collect();
    arts.add_table("v.csv", &["x", "v"], &rows);
    Ok(json!({
        "model_id": model.id(),
        "rho": rep.rho,
        "argmin": rep.argmin,
        "constant": rep.constant,
        "tail_flag": rep.tail_flag,
        "window": [window.lo, window.hi],
        "n_grid": n_grid,
        "degenerate_jumps": model.degenerate_jumps(),
        "monotone": mono,
    }))
}

fn tv(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let window = cfg.window_or(model.domain())?;
    let n_grid = cfg.n_grid.unwrap_or(DEFAULT_GRID);
    let kappa = need(cfg.kappa, "kappa")?;
    let c_kernel = need(cfg.c_kernel, "c_kernel")?;
    let w0 = need(cfg.w0, "w0")?;
    let times = if cfg.times.is_empty() {
        vec![need(cfg.t, "times")?]
    } else {
        cfg.times.clone()
    };
    let mut consts = None;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &t in &times {
        let (c, bound) = tv_bound(&model, window, n_grid, kappa, c_kernel, w0, t)?;
        consts = Some(c);
        let local = match (cfg.x0, cfg.y0) {
            (Some(x), Some(y)) => Some(tv_local_bound(&model, window, n_grid, x, y, t, c_kernel)?),
            _ => None,
        };
        table.push(vec![t, bound, local.unwrap_or(f64::NAN)]);
        rows.push(json!({"t": t, "bound": bound, "local_bound": local}));
    }
    arts.add_table("tv_bound.csv", &["t", "bound", "local_bound"], &table);
    Ok(json!({
        "model_id": model.id(),
        "constants": consts,
        "bounds": rows,
    }))
}

fn simulate(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let sim = cfg.require_sim()?;
    let ens = simulate_ensemble(&model, &initial(cfg)?, sim)?;
    let mut buf = Vec::new();
    ens.write_csv(&mut buf)?;
    arts.add("paths.csv", buf);
    let means: Vec<Value> = (0..ens.n_checkpoints())
        .map(|k| {
            let (m, se) = ens.mean_se(k);
            json!({"t": ens.checkpoint_times[k], "mean": m, "std_error": se})
        })
        .collect();
    Ok(json!({
        "model_id": model.id(),
        "n_paths": ens.n_paths,
        "seed": ens.seed,
        "scheme": ens.scheme,
        "clipped": ens.clipped,
        "checkpoint_times": ens.checkpoint_times,
        "means": means,
    }))
}

fn pair_starts(cfg: &ExperimentConfig) -> CliResult<(f64, f64)> {
    Ok((need(cfg.x0, "x0")?, need(cfg.y0, "y0")?))
}

/// Profile points kept by a decay fit.
fn fit_points(profile: &[ProfilePoint], from: Option<f64>) -> Vec<(f64, f64)> {
    profile
        .iter()
        .filter(|p| from.is_none_or(|f| p.t >= f))
        .map(|p| (p.t, p.value))
        .collect()
}

fn profile_rows(profile: &[ProfilePoint]) -> Vec<Vec<f64>> {
    profile
        .iter()
        .map(|p| vec![p.t, p.value, p.std_error])
        .collect()
}

fn couple(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let sim = cfg.require_sim()?;
    let (x0, y0) = pair_starts(cfg)?;
    let out = couple_synchronous(&model, x0, y0, sim)?;
    let mut buf = Vec::new();
    out.write_dist_csv(&mut buf)?;
    arts.add("dist.csv", buf);
    let profile = if x0 != y0 {
        Some(contraction_profile(&out)?)
    } else {
        None
    };
    let fit = profile
        .as_ref()
        .and_then(|p| fit_decay_rate_opts(&fit_points(p, cfg.fit_from), cfg.drop_first).ok());
    Ok(json!({
        "model_id": model.id(),
        "x0": x0,
        "y0": y0,
        "clipped": out.clipped,
        "profile": profile,
        "fit": fit,
    }))
}

fn couple_tv(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let sim = cfg.require_sim()?;
    let (x0, y0) = pair_starts(cfg)?;
    let out = couple_tv_sticking(&model, x0, y0, sim)?;
    let mut buf = Vec::new();
    out.write_equal_csv(&mut buf)?;
    arts.add("equal.csv", buf);
    let mut buf = Vec::new();
    out.write_dist_csv(&mut buf)?;
    arts.add("dist.csv", buf);
    let tv: Vec<Value> = (0..out.checkpoint_times.len())
        .map(|k| {
            let (p, se) = empirical_tv(&out, k);
            json!({"t": out.checkpoint_times[k], "tv": p, "std_error": se})
        })
        .collect();
    Ok(json!({"model_id": model.id(), "x0": x0, "y0": y0, "tv": tv}))
}

fn fk(cfg: &ExperimentConfig) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let sim = cfg.require_sim()?;
    let fp = fn_from(&cfg.f_prime, "f_prime")?;
    let x = need(cfg.x, "x")?;
    let t = need(cfg.t, "t")?;
    let est = fk_gradient(&model, &|y| fp.eval(y), x, t, sim)?;
    let fd = match (&cfg.f, cfg.delta) {
        (Some(_), Some(delta)) => {
            let f = fn_from(&cfg.f, "f")?;
            Some(semigroup_gradient_fd(
                &model,
                &|y| f.eval(y),
                x,
                delta,
                t,
                sim,
            )?)
        }
        _ => None,
    };
    let z = fd.map(|d| (est.value - d.value) / (est.std_error.hypot(d.std_error)));
    Ok(json!({"model_id": model.id(), "x": x, "t": t, "fk": est, "fd": fd, "z": z}))
}

#[derive(Serialize)]
struct DecayReport {
    model_id: String,
    rho: f64,
    fitted_rate: Option<f64>,
    bound_satisfied: bool,
    z_score: f64,
    violations: Vec<f64>,
    clipped: u64,
    fit: Option<DecayFit>,
}

fn decay_study(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let model = cfg.require_model()?;
    let sim = cfg.require_sim()?;
    let (x0, y0) = pair_starts(cfg)?;
    let window = cfg.window_or(model.domain())?;
    let rho = curvature_rho(&model, window, cfg.n_grid.unwrap_or(DEFAULT_GRID))?.rho;
    let out = couple_synchronous(&model, x0, y0, sim)?;
    let profile = contraction_profile(&out)?;
    arts.add_table(
        "decay.csv",
        &["t", "omega_hat", "std_error"],
        &profile_rows(&profile),
    );
    let fit = fit_decay_rate_opts(&fit_points(&profile, cfg.fit_from), cfg.drop_first).ok();
    let check = check_exponential_bound(&profile, rho, 1.0);
    to_value(&DecayReport {
        model_id: model.id().to_string(),
        rho,
        fitted_rate: fit.as_ref().map(|f| f.rate),
        bound_satisfied: check.satisfied,
        z_score: check.max_z,
        violations: check.violations,
        clipped: out.clipped,
        fit,
    })
}

fn levy_params(cfg: &ExperimentConfig) -> CliResult<(f64, HDist)> {
    match &cfg.model {
        Some(ModelDoc::LevyIntegral { r, h }) => Ok((*r, h.clone())),
        _ => Err(Failure::Validation(
            "model: must be a levy_integral document".into(),
        )),
    }
}

fn moments_study(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let (r, h) = levy_params(cfg)?;
    let sim = cfg.require_sim()?;
    let n_max = cfg.n_max.unwrap_or(4);
    let oracle = levy_integral_moments(r, &|n| h.moment(n as f64), n_max)?;
    let ens = simulate_levy_integral(r, &h, sim)?;
    let samples = ens.column(ens.n_checkpoints() - 1);
    let emp = sample_moments(&samples, n_max)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for m in &emp {
        let o = oracle[m.n as usize];
        let z = if m.std_error > 0.0 {
            (m.moment - o) / m.std_error
        } else {
            0.0
        };
        let rel = if o != 0.0 {
            (m.moment - o).abs() / o.abs()
        } else {
            f64::NAN
        };
        table.push(vec![m.n as f64, m.moment, m.std_error, o, z, rel]);
        rows.push(json!({"n": m.n, "empirical": m.moment, "std_error": m.std_error, "oracle": o, "z": z, "rel_error": rel}));
    }
    arts.add_table(
        "moments.csv",
        &["n", "empirical", "std_error", "oracle", "z", "rel_error"],
        &table,
    );
    Ok(
        json!({"model_id": "levy_integral", "t": ens.checkpoint_times.last(), "n_paths": ens.n_paths, "moments": rows}),
    )
}

fn moments_oracle(cfg: &ExperimentConfig) -> CliResult<Value> {
    let (r, h) = levy_params(cfg)?;
    let m = levy_integral_moments(r, &|n| h.moment(n as f64), cfg.n_max.unwrap_or(4))?;
    let rows: Vec<Value> = m
        .iter()
        .enumerate()
        .map(|(n, v)| json!({"n": n, "moment": v}))
        .collect();
    Ok(json!({"model_id": "levy_integral", "moments": rows}))
}

fn default_potential(cfg: &ExperimentConfig) -> PotentialDoc {
    cfg.potential.clone().unwrap_or(PotentialDoc::DoubleWell)
}

/// Primary eigen-solve plus the window-convergence report.
fn eigen_core(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<(Value, LangevinRate)> {
    let q = default_potential(cfg).build()?;
    let mut windows: Vec<Interval> = cfg
        .windows
        .iter()
        .map(|w| w.build())
        .collect::<Result<_, _>>()?;
    if windows.is_empty() {
        windows.push(match cfg.window {
            Some(w) => w.build()?,
            None => Interval::new(-10.0, 10.0)?,
        });
    }
    let n_grid = cfg.n_grid.unwrap_or(EIGEN_GRID);
    let spacing = windows[0].width() / (n_grid + 1) as f64;
    if windows.len() < 2 {
        // same spacing on a window half as wide again
        let w = windows[0];
        let pad = 0.25 * w.width();
        windows.push(Interval::new(w.lo - pad, w.hi + pad)?);
    }
    let grids: Vec<usize> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i == 0 {
                n_grid
            } else {
                ((w.width() / spacing).round() as usize).saturating_sub(1)
            }
        })
        .collect();
    let primary = schrodinger_ground_state(&*q.dq, &*q.d2q, windows[0], n_grid)?;
    let rate = langevin_rate(&q, windows[0], n_grid)?;
    let mut conv = Vec::new();
    let mut max_change: f64 = 0.0;
    for (w, &n) in windows.iter().zip(&grids) {
        let l = langevin_rate(&q, *w, n)?.lambda;
        max_change = max_change.max((l - rate.lambda).abs());
        conv.push(json!({"window": [w.lo, w.hi], "n_grid": n, "lambda": l}));
    }
    let rows: Vec<Vec<f64>> = primary
        .grid
        .iter()
        .zip(&primary.eigenvector)
        .map(|(x, v)| vec![*x, *v])
        .collect();
    arts.add_table("eigenvector.csv", &["x", "phi"], &rows);
    Ok((
        json!({
            "lambda": rate.lambda,
            "residual": primary.residual,
            "inf_q_second": rate.inf_q_second,
            "warning": rate.warning,
            "convergence": conv,
            "max_window_change": max_change,
        }),
        rate,
    ))
}

fn eigen(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    Ok(eigen_core(cfg, arts)?.0)
}

fn eigen_study(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let (mut report, rate) = eigen_core(cfg, arts)?;
    let model = make_langevin(&default_potential(cfg).build()?)?;
    let sim = cfg.require_sim()?;
    let (x0, y0) = pair_starts(cfg)?;
    let out = couple_synchronous(&model, x0, y0, sim)?;
    let profile = contraction_profile(&out)?;
    arts.add_table(
        "decay.csv",
        &["t", "omega_hat", "std_error"],
        &profile_rows(&profile),
    );
    let fit = fit_decay_rate_opts(&fit_points(&profile, cfg.fit_from), cfg.drop_first)?;
    report["model_id"] = json!(model.id());
    report["fitted_rate"] = json!(fit.rate);
    report["rel_error"] = json!((fit.rate - rate.lambda).abs() / rate.lambda);
    report["fit"] = to_value(&fit)?;
    Ok(report)
}

fn require_density(cfg: &ExperimentConfig) -> CliResult<&DensityDoc> {
    cfg.density
        .as_ref()
        .ok_or_else(|| Failure::Validation("density: required for this experiment".into()))
}

/// Normalization of the chosen series reading and whether it passes the gate.
fn normalization_gate(d: &DensityDoc) -> (Option<f64>, bool, Option<String>) {
    match embedded_density_normalization(d.a, d.alpha, d.h, d.n_terms, d.form) {
        Ok(z) => (Some(z), (z - 1.0).abs() <= NORMALIZATION_TOLERANCE, None),
        Err(e) => (None, false, Some(e.to_string())),
    }
}

fn embedded_density(cfg: &ExperimentConfig, arts: &mut Artifacts) -> CliResult<Value> {
    let d = require_density(cfg)?;
    let xs = if d.xs.is_empty() {
        let top = embedded_density_support_end(d.a, d.alpha, d.h)?;
        (0..=100).map(|i| top * i as f64 / 100.0).collect()
    } else {
        d.xs.clone()
    };
    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = tcp_embedded_invariant_density(d.a, d.alpha, d.h, x, d.n_terms, d.form)?;
        rows.push(vec![x, v.value, v.tail_bound]);
    }
    arts.add_table("density.csv", &["x", "density", "tail_bound"], &rows);
    let (z, pass, reason) = normalization_gate(d);
    Ok(json!({
        "form": d.form,
        "n_terms": d.n_terms,
        "normalization": z,
        "normalization_passed": pass,
        "normalization_error": reason,
    }))
}

fn embedded_study(cfg: &ExperimentConfig) -> CliResult<Value> {
    let d = require_density(cfg)?;
    let chain = cfg
        .chain
        .as_ref()
        .ok_or_else(|| Failure::Validation("chain: required for this experiment".into()))?;
    let x0 = need(cfg.x0, "x0")?;
    let (a, k) = (d.a, d.alpha + 1.0);
    let big_r = move |x: f64| a * x.powf(k) / k;
    let r_inv = move |y: f64| (k * y / a).powf(1.0 / k);
    let h = HDist::Dirac(d.h);
    let (z, pass, reason) = normalization_gate(d);

    let mut report = json!({
        "form": d.form,
        "normalization": z,
        "normalization_passed": pass,
        "normalization_error": reason,
    });
    if pass {
        let states = simulate_embedded_chain(
            &big_r,
            &r_inv,
            &h,
            x0,
            chain.n_steps,
            chain.n_chains,
            chain.seed,
        )?;
        let samples = states.column(chain.n_steps);
        let edges = embedded_density_bin_edges(d.a, d.alpha, d.h, d.n_terms, d.form, chain.bins)?;
        let mut observed = vec![0u64; chain.bins];
        for s in &samples {
            let j = edges.partition_point(|&e| e <= *s).clamp(1, chain.bins) - 1;
            observed[j] += 1;
        }
        let expected = vec![samples.len() as f64 / chain.bins as f64; chain.bins];
        let stat = chi_square_statistic(&observed, &expected)?;
        let crit = chi_square_critical(chain.bins as u32 - 1, 0.01)?;
        report["chi_square"] = json!({"statistic": stat, "critical_1pct": crit, "passed": stat <= crit, "observed": observed});
    } else {
        report["chi_square"] = json!({"skipped": "density failed its normalization gate"});
    }
    if let Some(y0) = cfg.y0 {
        let (xs, ys) = simulate_embedded_pair(
            &big_r,
            &r_inv,
            &h,
            x0,
            y0,
            chain.n_steps,
            chain.n_chains,
            chain.seed,
        )?;
        let mut steps = Vec::new();
        let mut all_ok = true;
        for n in 0..chain.n_steps {
            let d_now: Vec<f64> = (0..chain.n_chains)
                .map(|i| (xs.state(i, n) - ys.state(i, n)).abs())
                .collect();
            let d_next: Vec<f64> = (0..chain.n_chains)
                .map(|i| (xs.state(i, n + 1) - ys.state(i, n + 1)).abs())
                .collect();
            let gap: Vec<f64> = d_next
                .iter()
                .zip(&d_now)
                .map(|(b, a)| b - d.h * a)
                .collect();
            let (m, se) = mean_se(&gap);
            let ok = m <= 3.0 * se + ergo_core::metrics::EXACT_SLACK;
            all_ok &= ok;
            steps.push(json!({"step": n, "mean_next": mean_se(&d_next).0, "factor_times_mean": d.h * mean_se(&d_now).0, "passed": ok}));
        }
        report["contraction"] = json!({"passed": all_ok, "steps": steps});
    }
    Ok(report)
}

fn read_matrix(path: &std::path::Path) -> CliResult<Matrix> {
    let f = std::fs::File::open(path)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    Ok(parse_matrix_csv(f)?)
}

fn metrics(cfg: &ExperimentConfig) -> CliResult<Value> {
    let doc = cfg
        .metric
        .as_ref()
        .ok_or_else(|| Failure::Validation("metric: required for this experiment".into()))?;
    let m = read_matrix(&doc.input)?;
    if m.rows.is_empty() {
        return Err(Error::Empty("matrix rows").into());
    }
    let col = |m: &Matrix| -> CliResult<usize> {
        let k = doc.column.unwrap_or(m.times.len() - 1);
        if k < m.times.len() {
            Ok(k)
        } else {
            Err(Failure::Validation(format!(
                "metric.column: {k} out of range"
            )))
        }
    };
    Ok(match doc.kind {
        MetricKind::Contraction => {
            let d0 = m.rows[0][0];
            if m.times[0] != 0.0 || !(d0 > 0.0) || m.rows.iter().any(|r| r[0] != d0) {
                return Err(Failure::Validation(
                    "metric.input: first column must be t=0 with one positive initial distance"
                        .into(),
                ));
            }
            let profile: Vec<ProfilePoint> = (0..m.times.len())
                .map(|k| {
                    let (mean, se) = mean_se(&m.column(k));
                    ProfilePoint {
                        t: m.times[k],
                        value: mean / d0,
                        std_error: se / d0,
                    }
                })
                .collect();
            let fit = fit_decay_rate_opts(&fit_points(&profile, cfg.fit_from), cfg.drop_first).ok();
            json!({"metric": "contraction", "profile": profile, "fit": fit})
        }
        MetricKind::Tv => {
            let tv: Vec<Value> = (0..m.times.len())
                .map(|k| {
                    let c = m.column(k);
                    let n = c.len() as f64;
                    let p = c.iter().filter(|&&v| v == 0.0).count() as f64 / n;
                    json!({"t": m.times[k], "tv": p, "std_error": (p * (1.0 - p) / n).sqrt()})
                })
                .collect();
            json!({"metric": "tv", "tv": tv})
        }
        MetricKind::Moments => {
            let k = col(&m)?;
            let est = sample_moments(&m.column(k), cfg.n_max.unwrap_or(4))?;
            json!({"metric": "moments", "t": m.times[k], "moments": est})
        }
        MetricKind::Wasserstein => {
            let b_path = doc.input_b.as_ref().ok_or_else(|| {
                Failure::Validation("metric.input_b: required for wasserstein".into())
            })?;
            let mb = read_matrix(b_path)?;
            let (ka, kb) = (col(&m)?, col(&mb)?);
            let p = doc.p.unwrap_or(1.0);
            let w = wasserstein_p_1d(&m.column(ka), &mb.column(kb), p)?;
            json!({"metric": "wasserstein", "p": p, "value": w})
        }
    })
}
