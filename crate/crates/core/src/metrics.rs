// SPDX-License-Identifier: Apache-2.0

//! Distances, decay fits and moment estimates computed from ensembles and
//! coupling outcomes.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::coupling::CouplingOutcome;
use crate::error::{Error, Result};

/// Sample mean and its standard error (`sd/√n`, zero for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Empirical `W_p` between equal-size samples via the comonotone coupling.
pub fn wasserstein_p_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein sample"));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if !(p >= 1.0) {
        return Err(Error::param("p", format!("must be >= 1, got {p}")));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let n = a.len() as f64;
    let mean = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        / n;
    Ok(mean.powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub t: f64,
    pub value: f64,
    pub std_error: f64,
}

/// `ω̄(t) = E|X_t − Y_t| / |x0 − y0|` for the coupled pair.
pub fn contraction_profile(outcome: &CouplingOutcome) -> Result<Vec<ProfilePoint>> {
    let d0 = (outcome.x0 - outcome.y0).abs();
    if d0 == 0.0 {
        return Err(Error::ZeroInitialDistance);
    }
    Ok(outcome
        .checkpoint_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let (m, se) = mean_se(&outcome.dist_column(k));
            ProfilePoint {
                t,
                value: m / d0,
                std_error: se / d0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub log_distances: Vec<f64>,
    /// Negated least-squares slope of `ln value` against `t`.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_decay_rate(profile: &[(f64, f64)]) -> Result<DecayFit> {
    fit_decay_rate_opts(profile, false)
}

/// Least squares on `(t, ln value)`; `drop_first` discards the first point,
/// for profiles whose early values are dominated by a prefactor.
pub fn fit_decay_rate_opts(profile: &[(f64, f64)], drop_first: bool) -> Result<DecayFit> {
    let pts = if drop_first && !profile.is_empty() {
        &profile[1..]
    } else {
        profile
    };
    if pts.len() < 3 {
        return Err(Error::param(
            "profile",
            format!("need at least 3 points, got {}", pts.len()),
        ));
    }
    if let Some((i, &(_, v))) = pts.iter().enumerate().find(|(_, p)| !(p.1 > 0.0)) {
        return Err(Error::NonPositive { index: i, value: v });
    }
    let times: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let logs: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = pts.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = times
        .iter()
        .zip(&logs)
        .map(|(t, l)| (t - tm) * (l - lm))
        .sum();
    let syy: f64 = logs.iter().map(|l| (l - lm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("profile", "all times are equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        times,
        log_distances: logs,
        rate: -slope,
        intercept: lm - slope * tm,
        r_squared,
    })
}

/// Fraction of coupled paths not yet equal at checkpoint `k`, with its
/// binomial standard error. Upper-bounds the total-variation distance.
pub fn empirical_tv(outcome: &CouplingOutcome, k: usize) -> (f64, f64) {
    let n = outcome.n_paths;
    let unequal = (0..n).filter(|&i| !outcome.is_equal(i, k)).count();
    let p = unequal as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub n: u32,
    pub moment: f64,
    pub std_error: f64,
}

/// Raw empirical moments `1..=n_max` with jackknife standard errors.
pub fn sample_moments(samples: &[f64], n_max: u32) -> Result<Vec<MomentEstimate>> {
    if n_max < 1 {
        return Err(Error::param("n_max", "must be at least 1"));
    }
    let m = samples.len();
    if m < 2 {
        return Err(Error::Empty("moment samples"));
    }
    Ok((1..=n_max)
        .map(|n| {
            let vals: Vec<f64> = samples.iter().map(|x| x.powi(n as i32)).collect();
            let total: f64 = vals.iter().sum();
            let moment = total / m as f64;
            // leave-one-out means
            let loo = |v: f64| (total - v) / (m - 1) as f64;
            let loo_mean = vals.iter().map(|&v| loo(v)).sum::<f64>() / m as f64;
            let ss: f64 = vals.iter().map(|&v| (loo(v) - loo_mean).powi(2)).sum();
            MomentEstimate {
                n,
                moment,
                std_error: ((m - 1) as f64 / m as f64 * ss).sqrt(),
            }
        })
        .collect())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("ks sample"));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let v = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic critical value `c(α)·√((n+m)/(nm))`, `c(α) = √(−ln(α/2)/2)`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

pub fn chi_square_statistic(observed: &[u64], expected: &[f64]) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::LengthMismatch(observed.len(), expected.len()));
    }
    if let Some((i, &e)) = expected.iter().enumerate().find(|(_, e)| !(**e > 0.0)) {
        return Err(Error::NonPositive { index: i, value: e });
    }
    Ok(observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum())
}

/// Upper `alpha` quantile of the χ² law with `df` degrees of freedom.
pub fn chi_square_critical(df: u32, alpha: f64) -> Result<f64> {
    let law = ChiSquared::new(df as f64).map_err(|e| Error::param("df", e.to_string()))?;
    Ok(law.inverse_cdf(1.0 - alpha))
}

/// Variance of the group means' expectations, `Var(E[Z | group])`, from
/// equal-size groups: between-group variance minus the within-group
/// contribution. Returns the estimate and a jackknife-over-groups error.
pub fn between_group_variance(groups: &[Vec<f64>]) -> Result<(f64, f64)> {
    let k = groups.len();
    if k < 3 {
        return Err(Error::param("groups", "need at least 3 groups"));
    }
    let m = groups[0].len();
    if m < 2 {
        return Err(Error::param("groups", "need at least 2 samples per group"));
    }
    if let Some(g) = groups.iter().find(|g| g.len() != m) {
        return Err(Error::LengthMismatch(m, g.len()));
    }
    let stats: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| {
            let mean = g.iter().sum::<f64>() / m as f64;
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (mean, var)
        })
        .collect();
    let estimate = |skip: Option<usize>| {
        let it = || {
            stats
                .iter()
                .enumerate()
                .filter(move |(i, _)| Some(*i) != skip)
                .map(|(_, s)| s)
        };
        let kk = it().count() as f64;
        let gm = it().map(|s| s.0).sum::<f64>() / kk;
        let between = it().map(|s| (s.0 - gm).powi(2)).sum::<f64>() / (kk - 1.0);
        let within = it().map(|s| s.1).sum::<f64>() / kk;
        between - within / m as f64
    };
    let full = estimate(None);
    let loo: Vec<f64> = (0..k).map(|i| estimate(Some(i))).collect();
    let lm = loo.iter().sum::<f64>() / k as f64;
    let se = ((k - 1) as f64 / k as f64 * loo.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt();
    Ok((full, se))
}

/// Absolute slack for bound checks whose standard error vanishes, covering
/// floating-point rounding of exact identities.
pub const EXACT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub satisfied: bool,
    /// Largest `(value − bound)/SE` over the profile.
    pub max_z: f64,
    /// Times at which `value > bound + 3·SE + EXACT_SLACK`.
    pub violations: Vec<f64>,
}

/// Checks `ω̄(t) ≤ prefactor·e^{−rate·t}·(1 + 3·SE/bound)` at every profile
/// point, with the standard error taken relative to the bound.
pub fn check_exponential_bound(profile: &[ProfilePoint], rate: f64, prefactor: f64) -> BoundCheck {
    let mut max_z = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for p in profile {
        let bound = prefactor * (-rate * p.t).exp();
        let diff = p.value - bound;
        let z = if p.std_error > 0.0 {
            diff / p.std_error
        } else if diff.abs() <= EXACT_SLACK {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        max_z = max_z.max(z);
        if p.value > bound + 3.0 * p.std_error + EXACT_SLACK {
            violations.push(p.t);
        }
    }
    BoundCheck {
        satisfied: violations.is_empty(),
        max_z,
        violations,
    }
}
