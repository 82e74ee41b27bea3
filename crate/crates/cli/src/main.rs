// SPDX-License-Identifier: Apache-2.0

//! `ergo`: config-driven experiments over the ergo-core library.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime numeric error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod experiments;
mod merge;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ergo_core::config::{ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "ergo",
    version,
    about = "Ergodicity experiments for 1-D jump-diffusions and PDMPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    /// Result JSON files of the same experiment kind.
    inputs: Vec<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever experiment the config declares.
    Run(RunArgs),
    /// Potential V and curvature rho on a grid.
    Curvature(RunArgs),
    /// Total-variation bound constants for a PDMP.
    TvBound(RunArgs),
    /// Path ensemble at the checkpoints.
    Simulate(RunArgs),
    /// Synchronous coupling of two copies.
    Couple(RunArgs),
    /// Sticking coupling of a PDMP.
    CoupleTv(RunArgs),
    /// Feynman-Kac gradient estimate.
    FkGrad(RunArgs),
    /// Summaries of matrix CSVs written by other subcommands.
    Metrics(RunArgs),
    /// Stationary moments of the Levy-weighted Brownian integral.
    MomentsOracle(RunArgs),
    /// Invariant density of the embedded TCP chain.
    EmbeddedDensity(RunArgs),
    /// Schrodinger ground state of a Langevin potential.
    Eigen(RunArgs),
    /// Merge result JSONs into one summary CSV.
    ReportMerge(MergeArgs),
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<ergo_core::Error> for Failure {
    fn from(e: ergo_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(args: &RunArgs) -> CliResult<ExperimentConfig> {
    let src = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&src)?;
    if let Ok(v) = std::env::var("ERGO_SEED_OVERRIDE") {
        let seed = v.trim().parse::<u64>().map_err(|_| {
            Failure::Validation(format!(
                "ERGO_SEED_OVERRIDE={v:?} is not an unsigned integer"
            ))
        })?;
        cfg.override_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run_config(args: &RunArgs, forced: Option<ExperimentKind>) -> CliResult<()> {
    let cfg = load_config(args)?;
    let kind = cfg.resolve_kind(forced)?;
    let pool = match args.threads {
        Some(0) => return Err(Failure::Validation("--threads must be at least 1".into())),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let job = || experiments::run(kind, &cfg);
    let arts = match pool {
        Some(p) => p.install(job),
        None => job(),
    }?;
    let cfg_bytes = std::fs::read(&args.config).map_err(|e| Failure::Runtime(e.to_string()))?;
    let manifest = arts.write(&cfg.output_dir, kind, &cfg_bytes, &cfg)?;
    eprintln!(
        "{}: wrote {} artifacts to {}",
        kind.name(),
        manifest.artifacts.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run_config(a, None),
        Command::Curvature(a) => run_config(a, Some(ExperimentKind::Curvature)),
        Command::TvBound(a) => run_config(a, Some(ExperimentKind::TvBound)),
        Command::Simulate(a) => run_config(a, Some(ExperimentKind::Simulate)),
        Command::Couple(a) => run_config(a, Some(ExperimentKind::Couple)),
        Command::CoupleTv(a) => run_config(a, Some(ExperimentKind::CoupleTv)),
        Command::FkGrad(a) => run_config(a, Some(ExperimentKind::FkGrad)),
        Command::Metrics(a) => run_config(a, Some(ExperimentKind::Metrics)),
        Command::MomentsOracle(a) => run_config(a, Some(ExperimentKind::MomentsOracle)),
        Command::EmbeddedDensity(a) => run_config(a, Some(ExperimentKind::EmbeddedDensity)),
        Command::Eigen(a) => run_config(a, Some(ExperimentKind::Eigen)),
        Command::ReportMerge(a) => merge::run(&a.inputs, a.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Validation(m) => ("validation error", m),
                Failure::Runtime(m) => ("runtime error", m),
            };
            eprintln!("ergo: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
