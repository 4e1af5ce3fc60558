//! Orchestration of single runs, method comparisons and benchmark suites.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use multibec::operators::Discretization;
use multibec::optim::{initialize, run as run_method, ConvergenceReport, Method, Termination};
use multibec::Error;

use crate::config::{bundled, ConfigError, RunConfig};
use crate::output::{write_csv, write_field, Summary};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_LINEAR_SOLVER: i32 = 4;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Solver(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Solver(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Solver(e.into())
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Solver(e) => match e {
                Error::Config(_)
                | Error::Assumption(_)
                | Error::Capacity(_)
                | Error::Shape { .. } => EXIT_CONFIG,
                Error::LinearSolver(_) | Error::ZeroPivot { .. } | Error::MetricFailure { .. } => {
                    EXIT_LINEAR_SOLVER
                }
                Error::Init { .. } | Error::NonFinite(_) | Error::DegenerateState { .. } => {
                    EXIT_NOT_CONVERGED
                }
                Error::Usage(_) | Error::Oracle(_) | Error::Io(_) => EXIT_FAILURE,
            },
        }
    }
}

pub fn exit_code(termination: &Termination) -> i32 {
    match termination {
        Termination::Converged => EXIT_CONVERGED,
        Termination::MaxIterations
        | Termination::InnerBreakdown { .. }
        | Termination::NonFinite => EXIT_NOT_CONVERGED,
        Termination::MetricFailure { .. } => EXIT_LINEAR_SOLVER,
    }
}

/// Everything produced by one solve.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub report: ConvergenceReport,
    pub artifacts: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.report.termination)
    }
}

/// Discretizes, initializes, solves and writes the enabled artifacts.
pub fn solve(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let spec = cfg.problem_spec().map_err(|e| ConfigError {
        source: cfg.label.clone(),
        problems: vec![e],
    })?;
    let opts = cfg.solver_options();
    let start = Instant::now();
    let disc =
        Discretization::with_preconditioner(&spec, cfg.discretization.h, cfg.linear.precond)?;
    let init = initialize(&disc, &opts)?;
    let report = run_method(&disc, init.state, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    let summary = Summary::new(
        &cfg.label,
        &disc,
        (init.steps, init.residual),
        &report,
        seconds,
    );
    let artifacts = write_artifacts(cfg, &disc, &report, &summary)?;
    Ok(RunOutcome {
        summary,
        report,
        artifacts,
    })
}

fn write_artifacts(
    cfg: &RunConfig,
    disc: &Discretization,
    report: &ConvergenceReport,
    summary: &Summary,
) -> Result<Vec<PathBuf>, RunError> {
    let out = &cfg.output;
    if !(out.csv || out.field || out.summary) {
        return Ok(Vec::new());
    }
    fs::create_dir_all(&out.dir)?;
    let stem = cfg.output_stem();
    let mut written = Vec::new();
    if out.csv {
        let path = out.dir.join(format!("{stem}.csv"));
        write_csv(
            BufWriter::new(File::create(&path)?),
            disc.p(),
            &report.records,
        )?;
        written.push(path);
    }
    if out.field {
        let path = out.dir.join(format!("{stem}.field"));
        write_field(BufWriter::new(File::create(&path)?), disc, &report.state)?;
        written.push(path);
    }
    if out.summary {
        let path = out.dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(summary).expect("summary serializes");
        fs::write(&path, json + "\n")?;
        written.push(path);
    }
    Ok(written)
}

/// Solves every configuration of one problem; rows come back sorted by
/// method name, alternating variants first.
pub fn compare(configs: &[RunConfig]) -> Result<Vec<RunOutcome>, RunError> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    let mut problems = Vec::new();
    for c in &configs[1..] {
        if c.problem != first.problem || c.discretization != first.discretization {
            problems.push(format!(
                "`{}` does not share the problem and discretization of `{}`",
                c.label, first.label
            ));
        }
    }
    if !problems.is_empty() {
        return Err(ConfigError {
            source: "compare".into(),
            problems,
        }
        .into());
    }
    let mut outcomes = configs.iter().map(solve).collect::<Result<Vec<_>, _>>()?;
    outcomes.sort_by(|a, b| {
        (a.summary.method.as_str(), !a.summary.alternating)
            .cmp(&(b.summary.method.as_str(), !b.summary.alternating))
    });
    Ok(outcomes)
}

/// The four methods compared in the benchmark tables.
pub const TABLE_METHODS: [Method; 4] = [Method::EaRgd, Method::LgrRgd, Method::Rn, Method::RegRn];

/// Bundled configurations and methods making up a benchmark suite.
pub fn suite(name: &str) -> Option<Vec<(&'static str, Vec<Method>)>> {
    match name {
        "table1" => Some(vec![
            ("bench1d_beta10", TABLE_METHODS.to_vec()),
            ("bench1d_beta100", TABLE_METHODS.to_vec()),
            ("bench1d_beta1000", TABLE_METHODS.to_vec()),
        ]),
        "table2" => Some(vec![("bench2d_periodic", TABLE_METHODS.to_vec())]),
        "random" => Some(vec![("bench2d_random", vec![Method::EaRgd])]),
        _ => None,
    }
}

pub const SUITES: [&str; 3] = ["table1", "table2", "random"];

/// Expands a suite into per-method configurations, grouped by problem.
pub fn suite_configs(name: &str) -> Result<Vec<(String, Vec<RunConfig>)>, ConfigError> {
    let entries = suite(name).ok_or_else(|| ConfigError {
        source: name.to_string(),
        problems: vec![format!("unknown suite; available: {}", SUITES.join(", "))],
    })?;
    let mut groups = Vec::new();
    for (config, methods) in entries {
        let base = bundled(config)?;
        let runs = methods
            .into_iter()
            .map(|m| {
                let mut cfg = base.clone();
                cfg.solver.method = m;
                cfg.solver.alternating = None;
                cfg.solver.omega = None;
                cfg.output.name = Some(format!("{config}_{m}"));
                cfg
            })
            .collect();
        groups.push((config.to_string(), runs));
    }
    Ok(groups)
}
