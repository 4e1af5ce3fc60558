//! Run configuration: TOML sections `problem`, `discretization`, `solver`,
//! `linear` and `output`.
//!
//! Parsing happens in two passes. The raw table is first checked against
//! the key schema so that every unknown or missing key is reported at once,
//! then the typed structures are deserialized and validated.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use multibec::fem::{Boundary, Interval};
use multibec::model::{validate, InteractionMatrix, Potential, PotentialSpec, ProblemSpec};
use multibec::operators::PreconditionerKind;
use multibec::optim::{InitOptions, InnerTolerance, Method, ResidualNorm, SolverOptions};

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub problems: Vec<String>,
}

impl ConfigError {
    fn single(source: &str, problem: impl Into<String>) -> Self {
        Self {
            source: source.to_string(),
            problems: vec![problem.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration {}:", self.source)?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSection {
    pub dimension: Option<usize>,
    /// One `[lo, hi]` pair per axis.
    pub domain: Vec<[f64; 2]>,
    pub masses: Vec<f64>,
    pub kappa: Vec<Vec<f64>>,
    #[serde(default)]
    pub bc: Boundary,
    /// Shared by all components.
    pub potential: Option<PotentialSpec>,
    /// One per component.
    pub potentials: Option<Vec<PotentialSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSection {
    pub h: f64,
    #[serde(default = "quadratic")]
    pub order: u32,
}

fn quadratic() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub method: Method,
    /// Defaults to `true` for gradient methods.
    pub alternating: Option<bool>,
    pub tau: f64,
    pub omega: Option<f64>,
    pub tol: f64,
    pub residual_norm: ResidualNorm,
    pub max_outer: usize,
    pub newton_max_inner: usize,
    pub armijo: bool,
    pub hybrid: bool,
    pub init: InitOptions,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            method: d.method,
            alternating: None,
            tau: d.tau,
            omega: d.omega,
            tol: d.tol,
            residual_norm: d.residual_norm,
            max_outer: d.max_outer,
            newton_max_inner: d.newton_max_inner,
            armijo: d.armijo,
            hybrid: d.hybrid,
            init: d.init,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolerancePolicy {
    /// `clamp(scale · res, min, max)`.
    #[default]
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSection {
    pub precond: PreconditionerKind,
    pub policy: TolerancePolicy,
    /// Tolerance of the `fixed` policy.
    pub fixed: Option<f64>,
    pub scale: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl Default for LinearSection {
    fn default() -> Self {
        let d = InnerTolerance::default();
        Self {
            precond: PreconditionerKind::default(),
            policy: TolerancePolicy::default(),
            fixed: None,
            scale: d.scale,
            min: d.min,
            max: d.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// File stem of the artifacts; defaults to the config file stem.
    pub name: Option<String>,
    pub csv: bool,
    pub field: bool,
    pub summary: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            name: None,
            csv: true,
            field: true,
            summary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub linear: LinearSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Config file stem, used to name the artifacts.
    #[serde(skip)]
    pub label: String,
}

const TOP: &[&str] = &["problem", "discretization", "solver", "linear", "output"];
const PROBLEM: &[&str] = &[
    "dimension",
    "domain",
    "masses",
    "kappa",
    "bc",
    "potential",
    "potentials",
];
const POTENTIAL: &[&str] = &[
    "kind",
    "prefactor",
    "harmonic",
    "center",
    "lattice_depth",
    "lattice_wavenumber",
    "cell",
    "value",
    "probability",
    "seed",
    "path",
    "trap",
];
const TRAP: &[&str] = &["strength", "exponent"];
const DISCRETIZATION: &[&str] = &["h", "order"];
const SOLVER: &[&str] = &[
    "method",
    "alternating",
    "tau",
    "omega",
    "tol",
    "residual_norm",
    "max_outer",
    "newton_max_inner",
    "armijo",
    "hybrid",
    "init",
];
const INIT: &[&str] = &["target", "max_steps", "inner_factor"];
const LINEAR: &[&str] = &["precond", "policy", "fixed", "scale", "min", "max"];
const OUTPUT: &[&str] = &["dir", "name", "csv", "field", "summary"];

fn suggestion(key: &str, allowed: &[&'static str]) -> Option<&'static str> {
    allowed
        .iter()
        .map(|a| (strsim::jaro_winkler(key, a), *a))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, a)| a)
}

fn check_keys(table: &Table, path: &str, allowed: &[&'static str], problems: &mut Vec<String>) {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            let full = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            match suggestion(key, allowed) {
                Some(s) => problems.push(format!("unknown key `{full}`; did you mean `{s}`?")),
                None => problems.push(format!(
                    "unknown key `{full}`; expected one of {}",
                    allowed.join(", ")
                )),
            }
        }
    }
}

fn require(table: &Table, path: &str, keys: &[&str], problems: &mut Vec<String>) {
    for key in keys {
        if !table.contains_key(*key) {
            problems.push(format!("missing key `{path}.{key}`"));
        }
    }
}

fn sub_table<'a>(
    table: &'a Table,
    key: &str,
    path: &str,
    problems: &mut Vec<String>,
) -> Option<&'a Table> {
    match table.get(key) {
        Some(Value::Table(t)) => Some(t),
        Some(_) => {
            problems.push(format!("`{path}` must be a table"));
            None
        }
        None => None,
    }
}

fn check_potential(table: &Table, path: &str, problems: &mut Vec<String>) {
    check_keys(table, path, POTENTIAL, problems);
    if let Some(trap) = sub_table(table, "trap", &format!("{path}.trap"), problems) {
        check_keys(trap, &format!("{path}.trap"), TRAP, problems);
    }
}

fn check_schema(root: &Table) -> Vec<String> {
    let mut problems = Vec::new();
    check_keys(root, "", TOP, &mut problems);
    match sub_table(root, "problem", "problem", &mut problems) {
        Some(problem) => {
            check_keys(problem, "problem", PROBLEM, &mut problems);
            require(
                problem,
                "problem",
                &["domain", "masses", "kappa"],
                &mut problems,
            );
            if let Some(pot) = sub_table(problem, "potential", "problem.potential", &mut problems) {
                check_potential(pot, "problem.potential", &mut problems);
            }
            if let Some(list) = problem.get("potentials") {
                match list.as_array() {
                    Some(items) => {
                        for (i, item) in items.iter().enumerate() {
                            match item.as_table() {
                                Some(t) => check_potential(
                                    t,
                                    &format!("problem.potentials[{i}]"),
                                    &mut problems,
                                ),
                                None => problems
                                    .push(format!("`problem.potentials[{i}]` must be a table")),
                            }
                        }
                    }
                    None => problems.push("`problem.potentials` must be an array of tables".into()),
                }
            }
            match (
                problem.contains_key("potential"),
                problem.contains_key("potentials"),
            ) {
                (false, false) => problems
                    .push("missing key `problem.potential` (or `problem.potentials`)".into()),
                (true, true) => problems.push(
                    "give either `problem.potential` or `problem.potentials`, not both".into(),
                ),
                _ => {}
            }
        }
        None => problems.push("missing section `problem`".into()),
    }
    match sub_table(root, "discretization", "discretization", &mut problems) {
        Some(d) => {
            check_keys(d, "discretization", DISCRETIZATION, &mut problems);
            require(d, "discretization", &["h"], &mut problems);
        }
        None => problems.push("missing section `discretization`".into()),
    }
    if let Some(s) = sub_table(root, "solver", "solver", &mut problems) {
        check_keys(s, "solver", SOLVER, &mut problems);
        if let Some(init) = sub_table(s, "init", "solver.init", &mut problems) {
            check_keys(init, "solver.init", INIT, &mut problems);
        }
    }
    if let Some(l) = sub_table(root, "linear", "linear", &mut problems) {
        check_keys(l, "linear", LINEAR, &mut problems);
    }
    if let Some(o) = sub_table(root, "output", "output", &mut problems) {
        check_keys(o, "output", OUTPUT, &mut problems);
    }
    problems
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(&source, format!("cannot read: {e}")))?;
    let mut cfg = parse_str(&text, &source)?;
    cfg.label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Ok(cfg)
}

/// Parses configuration text; `source` only labels error messages.
pub fn parse_str(text: &str, source: &str) -> Result<RunConfig, ConfigError> {
    let root: Table =
        toml::from_str(text).map_err(|e| ConfigError::single(source, e.message().to_string()))?;
    let problems = check_schema(&root);
    if !problems.is_empty() {
        return Err(ConfigError {
            source: source.to_string(),
            problems,
        });
    }
    let mut cfg: RunConfig = RunConfig::deserialize(Value::Table(root))
        .map_err(|e| ConfigError::single(source, e.to_string()))?;
    cfg.label = "run".into();
    let problems = cfg.semantic_problems();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError {
            source: source.to_string(),
            problems,
        })
    }
}

impl RunConfig {
    fn semantic_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let p = &self.problem;
        if let Some(d) = p.dimension {
            if d != p.domain.len() {
                problems.push(format!(
                    "problem.dimension is {d} but problem.domain has {} axes",
                    p.domain.len()
                ));
            }
        }
        if !(1..=2).contains(&p.domain.len()) {
            problems.push(format!(
                "problem.domain must have 1 or 2 axes, got {}",
                p.domain.len()
            ));
        }
        if let Some(list) = &p.potentials {
            if list.len() != p.masses.len() {
                problems.push(format!(
                    "problem.potentials has {} entries for {} components",
                    list.len(),
                    p.masses.len()
                ));
            }
        }
        if self.discretization.order != 2 {
            problems.push(format!(
                "discretization.order must be 2 (quadratic elements), got {}",
                self.discretization.order
            ));
        }
        if self.linear.policy == TolerancePolicy::Fixed && self.linear.fixed.is_none() {
            problems.push("linear.policy = \"fixed\" requires linear.fixed".into());
        }
        if let Err(e) = self.solver_options().check() {
            problems.push(e.to_string());
        }
        match self.problem_spec() {
            Ok(spec) => {
                if let Err(e) = validate(&spec).and_then(|r| r.require_assumptions()) {
                    problems.push(e.to_string());
                }
            }
            Err(e) => problems.push(e),
        }
        problems
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, String> {
        let p = &self.problem;
        let kappa =
            InteractionMatrix::new(p.kappa.clone()).map_err(|e| format!("problem.kappa: {e}"))?;
        let potentials = match (&p.potential, &p.potentials) {
            (Some(shared), None) => vec![shared.clone(); p.masses.len()],
            (None, Some(list)) => list.clone(),
            _ => {
                return Err(
                    "exactly one of problem.potential and problem.potentials is required".into(),
                )
            }
        };
        Ok(ProblemSpec {
            domain: p
                .domain
                .iter()
                .map(|[lo, hi]| Interval::new(*lo, *hi))
                .collect(),
            masses: p.masses.clone(),
            kappa,
            potentials,
            bc: p.bc,
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        let l = &self.linear;
        SolverOptions {
            method: s.method,
            alternating: s.alternating.unwrap_or(!s.method.is_newton()),
            tau: s.tau,
            omega: s.omega,
            tol: s.tol,
            residual_norm: s.residual_norm,
            max_outer: s.max_outer,
            inner: InnerTolerance {
                scale: l.scale,
                min: l.min,
                max: l.max,
                fixed: match l.policy {
                    TolerancePolicy::Fixed => l.fixed,
                    TolerancePolicy::Adaptive => None,
                },
            },
            newton_max_inner: s.newton_max_inner,
            armijo: s.armijo,
            hybrid: s.hybrid,
            init: s.init,
        }
    }

    /// Applies command-line overrides and revalidates.
    pub fn apply_overrides(&mut self, ov: &Overrides) -> Result<(), ConfigError> {
        if let Some(tol) = ov.tol {
            self.solver.tol = tol;
        }
        if let Some(tau) = ov.tau {
            self.solver.tau = tau;
        }
        if let Some(method) = ov.method {
            if method != self.solver.method {
                self.solver.alternating = None;
                self.solver.omega = None;
            }
            self.solver.method = method;
        }
        if let Some(seed) = ov.seed {
            let pots = self
                .problem
                .potential
                .iter_mut()
                .chain(self.problem.potentials.iter_mut().flatten());
            for pot in pots {
                if let Potential::PiecewiseRandom { seed: s, .. } = &mut pot.shape {
                    *s = seed;
                }
            }
        }
        let problems = self.semantic_problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError {
                source: format!("{} (with overrides)", self.label),
                problems,
            })
        }
    }

    pub fn output_stem(&self) -> String {
        self.output
            .name
            .clone()
            .unwrap_or_else(|| self.label.clone())
    }
}

/// Command-line overrides of configuration values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub tau: Option<f64>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// Configurations shipped with the binary, by name.
        pub const BUNDLED: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../configs/", $name, ".toml")))),*
        ];
    };
}

bundled!(
    "bench1d_beta10",
    "bench1d_beta100",
    "bench1d_beta1000",
    "bench2d_periodic",
    "bench2d_random",
);

/// Parses a bundled configuration by name.
pub fn bundled(name: &str) -> Result<RunConfig, ConfigError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConfigError::single(name, "no bundled configuration of this name"))?;
    let mut cfg = parse_str(text, name)?;
    cfg.label = name.to_string();
    Ok(cfg)
}
