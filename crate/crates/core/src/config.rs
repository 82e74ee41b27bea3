// SPDX-License-Identifier: Apache-2.0

//! JSON model and experiment documents, and the checkpoint-matrix CSV format.

use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analytic::DensityForm;
use crate::curvature::TailAssertion;
use crate::error::{Error, Result};
use crate::model::{
    make_feller_bt, make_langevin, make_levy_integral, make_ou, make_storage, make_tcp, HDist,
    Interval, JumpLaw, ModelParts, ModelSpec, Potential, RateMonotonicity, ScalarField,
};
use crate::simulate::SimConfig;

/// Largest accepted JSON or CSV document, in bytes.
pub const MAX_DOC_LEN: usize = 16 << 20;

/// A scalar field with its derivative: a number, `{"const": c}`,
/// `{"affine": [intercept, slope]}` or `{"expr": "...", "deriv": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldDoc {
    Number(f64),
    Const {
        #[serde(rename = "const")]
        value: f64,
    },
    Affine {
        affine: [f64; 2],
    },
    Expr {
        expr: String,
        deriv: String,
    },
}

impl FieldDoc {
    pub fn build(&self) -> Result<ScalarField> {
        let finite = |v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::param("field", "coefficients must be finite"))
            }
        };
        Ok(match self {
            FieldDoc::Number(c) | FieldDoc::Const { value: c } => {
                ScalarField::constant(finite(*c)?)
            }
            FieldDoc::Affine { affine: [a, b] } => ScalarField::affine(finite(*a)?, finite(*b)?),
            FieldDoc::Expr { expr, deriv } => ScalarField::from_exprs(expr, deriv)?,
        })
    }
}

/// Domain ends; `null` stands for an infinite end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalDoc {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl IntervalDoc {
    pub fn build(&self) -> Result<Interval> {
        Interval::new(
            self.lo.unwrap_or(f64::NEG_INFINITY),
            self.hi.unwrap_or(f64::INFINITY),
        )
    }

    pub fn finite(lo: f64, hi: f64) -> Self {
        IntervalDoc {
            lo: Some(lo),
            hi: Some(hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpDoc {
    Multiplicative(HDist),
    AdditiveDown(HDist),
    ShiftedExponential(f64),
}

impl JumpDoc {
    pub fn build(&self) -> Result<JumpLaw> {
        let law = match self {
            JumpDoc::Multiplicative(h) => JumpLaw::Multiplicative(h.clone()),
            JumpDoc::AdditiveDown(h) => JumpLaw::AdditiveDown(h.clone()),
            JumpDoc::ShiftedExponential(rate) => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::param("shifted_exponential", "rate must be positive"));
                }
                JumpLaw::shifted_exponential(*rate)
            }
        };
        law.validate()?;
        Ok(law)
    }
}

/// `"double_well"`, `{"quadratic": μ}` or `{"expr": {"q", "dq", "d2q"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialDoc {
    DoubleWell,
    Quadratic(f64),
    Expr { q: String, dq: String, d2q: String },
}

impl PotentialDoc {
    pub fn build(&self) -> Result<Potential> {
        match self {
            PotentialDoc::DoubleWell => Ok(Potential::double_well()),
            PotentialDoc::Quadratic(mu) => {
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(Error::param("quadratic", "mu must be positive"));
                }
                Ok(Potential::quadratic(*mu))
            }
            PotentialDoc::Expr { q, dq, d2q } => Potential::from_exprs(q, dq, d2q),
        }
    }
}

fn default_double_well() -> PotentialDoc {
    PotentialDoc::DoubleWell
}

/// A model document, tagged by `"model"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDoc {
    Tcp {
        rate: FieldDoc,
        h: HDist,
    },
    FellerBt {
        g: f64,
        s: f64,
        rate: FieldDoc,
        h: HDist,
    },
    Storage {
        g: f64,
        lambda: f64,
        rate: FieldDoc,
    },
    Ou {
        mu: f64,
    },
    Langevin {
        #[serde(default = "default_double_well")]
        potential: PotentialDoc,
    },
    LevyIntegral {
        r: f64,
        h: HDist,
    },
    Custom {
        #[serde(default)]
        id: Option<String>,
        domain: IntervalDoc,
        g: FieldDoc,
        sigma: FieldDoc,
        r: FieldDoc,
        jump: JumpDoc,
        #[serde(default)]
        rate_monotonicity: Option<RateMonotonicity>,
        #[serde(default)]
        rate_bound: Option<f64>,
    },
}

impl ModelDoc {
    pub fn from_json(src: &str) -> Result<Self> {
        check_len(src.len())?;
        serde_json::from_str(src).map_err(|e| Error::Parse(format!("model document: {e}")))
    }

    pub fn build(&self) -> Result<ModelSpec> {
        match self {
            ModelDoc::Tcp { rate, h } => make_tcp(rate.build()?, h.clone()),
            ModelDoc::FellerBt { g, s, rate, h } => {
                make_feller_bt(*g, *s, rate.build()?, h.clone())
            }
            ModelDoc::Storage { g, lambda, rate } => make_storage(*g, *lambda, rate.build()?),
            ModelDoc::Ou { mu } => make_ou(*mu),
            ModelDoc::Langevin { potential } => make_langevin(&potential.build()?),
            ModelDoc::LevyIntegral { r, h } => make_levy_integral(*r, h.clone()),
            ModelDoc::Custom {
                id,
                domain,
                g,
                sigma,
                r,
                jump,
                rate_monotonicity,
                rate_bound,
            } => ModelSpec::new(ModelParts {
                id: id.clone().unwrap_or_else(|| "custom".into()),
                domain: domain.build()?,
                g: g.build()?,
                sigma: sigma.build()?,
                rate: r.build()?,
                jump: jump.build()?,
                rate_monotonicity: *rate_monotonicity,
                rate_global_bound: *rate_bound,
            }),
        }
    }
}

/// Parses and validates a model document in one step.
pub fn model_from_json(src: &str) -> Result<ModelSpec> {
    ModelDoc::from_json(src)?.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Curvature,
    TvBound,
    Simulate,
    Couple,
    CoupleTv,
    FkGrad,
    DecayStudy,
    MomentsStudy,
    MomentsOracle,
    EigenStudy,
    Eigen,
    EmbeddedStudy,
    EmbeddedDensity,
    Metrics,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Curvature => "curvature",
            ExperimentKind::TvBound => "tv-bound",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Couple => "couple",
            ExperimentKind::CoupleTv => "couple-tv",
            ExperimentKind::FkGrad => "fk-grad",
            ExperimentKind::DecayStudy => "decay-study",
            ExperimentKind::MomentsStudy => "moments-study",
            ExperimentKind::MomentsOracle => "moments-oracle",
            ExperimentKind::EigenStudy => "eigen-study",
            ExperimentKind::Eigen => "eigen",
            ExperimentKind::EmbeddedStudy => "embedded-study",
            ExperimentKind::EmbeddedDensity => "embedded-density",
            ExperimentKind::Metrics => "metrics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

/// Parameters of the embedded TCP chain with `r(x) = a x^α`, `H = δ_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityDoc {
    pub a: f64,
    pub alpha: f64,
    pub h: f64,
    #[serde(default = "default_terms")]
    pub n_terms: usize,
    #[serde(default)]
    pub form: DensityForm,
    /// Evaluation points of the density.
    #[serde(default)]
    pub xs: Vec<f64>,
}

fn default_terms() -> usize {
    40
}

/// Sizes of an embedded-chain study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    pub n_chains: usize,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub seed: u64,
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Profile, decay fit and ω̄ summary of a distance matrix.
    Contraction,
    /// Equality-indicator matrix to coupling TV bound.
    Tv,
    /// Moments of one checkpoint column.
    Moments,
    /// `W_p` between the last columns of two matrices.
    Wasserstein,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDoc {
    pub kind: MetricKind,
    pub input: PathBuf,
    #[serde(default)]
    pub input_b: Option<PathBuf>,
    #[serde(default)]
    pub p: Option<f64>,
    /// Checkpoint column; the last one when absent.
    #[serde(default)]
    pub column: Option<usize>,
}

/// One reproducible run. Fields irrelevant to `experiment` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional when the subcommand determines the kind.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub model: Option<ModelDoc>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
    #[serde(default)]
    pub window: Option<IntervalDoc>,
    #[serde(default)]
    pub windows: Vec<IntervalDoc>,
    #[serde(default)]
    pub n_grid: Option<usize>,
    #[serde(default)]
    pub tail: TailAssertion,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub y0: Option<f64>,
    #[serde(default)]
    pub initial_samples: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub c_kernel: Option<f64>,
    #[serde(default)]
    pub w0: Option<f64>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub f_prime: Option<String>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub n_max: Option<u32>,
    #[serde(default)]
    pub drop_first: bool,
    /// Smallest checkpoint time kept by decay fits.
    #[serde(default)]
    pub fit_from: Option<f64>,
    #[serde(default)]
    pub potential: Option<PotentialDoc>,
    #[serde(default)]
    pub density: Option<DensityDoc>,
    #[serde(default)]
    pub chain: Option<ChainDoc>,
    #[serde(default)]
    pub metric: Option<MetricDoc>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        check_len(src.len())?;
        serde_json::from_str(src).map_err(|e| Error::Parse(format!("experiment config: {e}")))
    }

    /// Kind after reconciling the document with the subcommand that reads it.
    pub fn resolve_kind(&self, forced: Option<ExperimentKind>) -> Result<ExperimentKind> {
        match (self.experiment, forced) {
            (Some(a), Some(b)) if a != b => Err(Error::param(
                "experiment",
                format!(
                    "config declares {} but the subcommand is {}",
                    a.name(),
                    b.name()
                ),
            )),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => Err(Error::param("experiment", "missing experiment kind")),
        }
    }

    pub fn require_model(&self) -> Result<ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::param("model", "required for this experiment"))?
            .build()
    }

    /// Simulation settings, validated.
    pub fn require_sim(&self) -> Result<&SimConfig> {
        let sim = self
            .sim
            .as_ref()
            .ok_or_else(|| Error::param("sim", "required for this experiment"))?;
        sim.validate().map_err(prefix_field("sim"))?;
        Ok(sim)
    }

    pub fn require<T: Copy>(value: Option<T>, name: &str) -> Result<T> {
        value.ok_or_else(|| Error::param(name, "required for this experiment"))
    }

    /// The window, or the domain's validation window.
    pub fn window_or(&self, domain: Interval) -> Result<Interval> {
        match self.window {
            Some(w) => w.build(),
            None => Ok(domain.validation_window()),
        }
    }

    /// Applies an integer seed override to every seed in the document.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(sim) = self.sim.as_mut() {
            sim.seed = seed;
        }
        if let Some(chain) = self.chain.as_mut() {
            chain.seed = seed;
        }
    }
}

fn prefix_field(prefix: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter { name, reason } => Error::InvalidParameter {
            name: format!("{prefix}.{name}"),
            reason,
        },
        other => other,
    }
}

fn check_len(len: usize) -> Result<()> {
    if len > MAX_DOC_LEN {
        Err(Error::Parse(format!(
            "document of {len} bytes exceeds {MAX_DOC_LEN}"
        )))
    } else {
        Ok(())
    }
}

/// A checkpoint matrix: one row per path, one column per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

/// Reads the CSV written by the simulation and coupling routines, with
/// header `t=<time>,...`.
pub fn parse_matrix_csv<R: Read>(reader: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader.take(MAX_DOC_LEN as u64 + 1));
    let parse_err = |e: csv::Error| Error::Parse(format!("matrix csv: {e}"));
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let times = headers
        .iter()
        .map(|h| {
            h.strip_prefix("t=")
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|t| t.is_finite())
                .ok_or_else(|| Error::Parse(format!("matrix csv: bad header cell {h:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if times.is_empty() {
        return Err(Error::Parse("matrix csv: empty header".into()));
    }
    let mut rows = Vec::new();
    let mut bytes = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        bytes += rec.as_slice().len();
        if bytes > MAX_DOC_LEN {
            return Err(Error::Parse("matrix csv: input too large".into()));
        }
        if rec.len() != times.len() {
            return Err(Error::Parse(format!(
                "matrix csv: row {} has {} cells, expected {}",
                i + 1,
                rec.len(),
                times.len()
            )));
        }
        let row = rec
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| !v.is_nan())
                    .ok_or_else(|| {
                        Error::Parse(format!("matrix csv: row {}: bad cell {c:?}", i + 1))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Matrix { times, rows })
}
