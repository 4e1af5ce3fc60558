//! Outer iterations: Riemannian gradient descent (plain and alternating),
//! Riemannian Newton and its regularized variant, the standard
//! initialization and the stopping rule.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SparseSymMatrix;
use crate::linalg::{dot, pcg, Preconditioner, Stopping};
use crate::manifold::{retract, retract_column};
use crate::operators::{col, col_mut, project_dual, Discretization, Frame, Work};

/// Optimization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Energy-preconditioned L² gradient descent.
    Pl2Rgd,
    /// Energy-adaptive gradient descent.
    EaRgd,
    /// Lagrangian-based gradient descent.
    LgrRgd,
    /// Riemannian Newton.
    Rn,
    /// Regularized Riemannian Newton.
    RegRn,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::EaRgd,
        Method::LgrRgd,
        Method::Pl2Rgd,
        Method::RegRn,
        Method::Rn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pl2Rgd => "pl2-rgd",
            Method::EaRgd => "ea-rgd",
            Method::LgrRgd => "lgr-rgd",
            Method::Rn => "rn",
            Method::RegRn => "reg-rn",
        }
    }

    pub fn is_newton(self) -> bool {
        matches!(self, Method::Rn | Method::RegRn)
    }

    /// Default regularization parameter ω.
    pub fn default_omega(self) -> f64 {
        match self {
            Method::RegRn => 0.99,
            _ => 1.0,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Adaptive inner tolerance `clamp(factor · scale · res, min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerTolerance {
    /// Multiplier of the residual; `None` picks 1 in 1D and 10 in 2D.
    pub scale: Option<f64>,
    pub min: f64,
    pub max: f64,
    /// Fixed tolerance overriding the adaptive rule.
    pub fixed: Option<f64>,
}

impl Default for InnerTolerance {
    fn default() -> Self {
        Self {
            scale: None,
            min: 1e-14,
            max: 1e-1,
            fixed: None,
        }
    }
}

impl InnerTolerance {
    pub fn tolerance(&self, dim: usize, residual: f64) -> f64 {
        if let Some(t) = self.fixed {
            return t;
        }
        let scale = self.scale.unwrap_or(if dim >= 2 { 10.0 } else { 1.0 });
        (scale * residual).clamp(self.min, self.max)
    }
}

/// Norm in which residuals are measured for stopping and inner tolerances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    /// `(Σ_j r_jᵀ M r_j)^{1/2}`.
    #[default]
    Mass,
    /// `(Σ_j r_jᵀ M⁻¹ r_j)^{1/2}`, the dual norm of the residual functional.
    Dual,
}

impl ResidualNorm {
    pub fn norms_sq(self, disc: &Discretization, r: &Frame) -> Result<Vec<f64>> {
        match self {
            ResidualNorm::Dual => disc.residual_norms_sq(r),
            ResidualNorm::Mass => Ok((0..r.ncols())
                .map(|j| disc.mass().quad_form(col(r, j)))
                .collect()),
        }
    }

    pub fn norm(self, disc: &Discretization, r: &Frame) -> Result<f64> {
        Ok(self.norms_sq(disc, r)?.iter().sum::<f64>().sqrt())
    }
}

/// Settings of the initial alternating eaRGD phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitOptions {
    /// Residual to reach; `None` picks 1e-2 in 1D and 1e-4 in 2D.
    pub target: Option<f64>,
    pub max_steps: usize,
    /// Factor applied to the inner tolerance during initialization.
    pub inner_factor: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            target: None,
            max_steps: 10_000,
            inner_factor: 1.5e-8,
        }
    }
}

impl InitOptions {
    pub fn target_for(&self, dim: usize) -> f64 {
        self.target.unwrap_or(if dim >= 2 { 1e-4 } else { 1e-2 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: Method,
    /// Sweep over components using the most recent iterates (gradient methods only).
    pub alternating: bool,
    pub tau: f64,
    /// Regularization ω; `None` uses the method default.
    pub omega: Option<f64>,
    pub tol: f64,
    pub residual_norm: ResidualNorm,
    pub max_outer: usize,
    pub inner: InnerTolerance,
    /// Krylov iteration cap for Newton systems.
    pub newton_max_inner: usize,
    /// Halving backtracking with sufficient decrease 1e-4 (gradient methods).
    pub armijo: bool,
    /// Replace a broken-down Newton step by one eaRGD step.
    pub hybrid: bool,
    pub init: InitOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::EaRgd,
            alternating: true,
            tau: 1.0,
            omega: None,
            tol: 1e-8,
            residual_norm: ResidualNorm::default(),
            max_outer: 10_000,
            inner: InnerTolerance::default(),
            newton_max_inner: 5_000,
            armijo: false,
            hybrid: false,
            init: InitOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alternating: !method.is_newton(),
            ..Self::default()
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega.unwrap_or(self.method.default_omega())
    }

    pub fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.tau > 0.0) {
            problems.push(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.tol > 0.0) {
            problems.push(format!("tol must be positive, got {}", self.tol));
        }
        let omega = self.omega();
        let lower_ok = if self.method == Method::RegRn {
            omega >= 0.0
        } else {
            omega > 0.0
        };
        if !(lower_ok && omega <= 1.0) {
            problems.push(format!("omega must lie in (0, 1], got {omega}"));
        }
        if self.alternating && self.method.is_newton() {
            problems.push(format!("method {} has no alternating variant", self.method));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// One evaluated iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub sigma: Vec<f64>,
    /// Inner matrix–vector products spent on the step leaving this iterate.
    pub inner_matvecs: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The Newton system was found indefinite.
    InnerBreakdown {
        iter: usize,
    },
    MetricFailure {
        component: usize,
    },
    NonFinite,
}

impl Termination {
    pub fn converged(&self) -> bool {
        matches!(self, Termination::Converged)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub method: Method,
    pub alternating: bool,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub state: Frame,
    /// Update steps performed.
    pub iterations: usize,
    pub total_ms: f64,
}

impl ConvergenceReport {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least one record")
    }

    pub fn energy(&self) -> f64 {
        self.final_record().energy
    }

    pub fn residual(&self) -> f64 {
        self.final_record().residual
    }

    pub fn total_matvecs(&self) -> usize {
        self.records.iter().map(|r| r.inner_matvecs).sum()
    }

    /// Average inner matrix–vector products per update step.
    pub fn average_matvecs(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.total_matvecs() as f64 / self.iterations as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Converged,
    Abort,
}

/// Converged iff `residual < tol`; non-finite residuals abort.
pub fn stop_check(residual: f64, tol: f64) -> StopDecision {
    if !residual.is_finite() {
        StopDecision::Abort
    } else if residual < tol {
        StopDecision::Converged
    } else {
        StopDecision::Continue
    }
}

/// Outcome of [`initialize`].
#[derive(Debug, Clone)]
pub struct InitReport {
    pub state: Frame,
    pub steps: usize,
    pub residual: f64,
    pub matvecs: usize,
}

/// Constant start, retracted, then alternating eaRGD with `τ = 1` until the
/// residual drops below the initialization target.
pub fn initialize(disc: &Discretization, options: &SolverOptions) -> Result<InitReport> {
    let phi = retract(
        disc.mass(),
        &Frame::from_element(disc.n(), disc.p(), 1.0),
        disc.masses(),
    )?;
    let dim = disc.space().dim();
    let target = options.init.target_for(dim);
    let inner = options.inner;
    let init_opts = SolverOptions {
        method: Method::EaRgd,
        alternating: true,
        tau: 1.0,
        omega: None,
        tol: target,
        max_outer: options.init.max_steps,
        inner,
        armijo: false,
        hybrid: false,
        ..options.clone()
    };
    let report = run_gradient(disc, phi, &init_opts, options.init.inner_factor)?;
    match report.termination {
        Termination::Converged => Ok(InitReport {
            steps: report.iterations,
            residual: report.residual(),
            matvecs: report.total_matvecs(),
            state: report.state,
        }),
        _ => Err(Error::Init {
            target,
            steps: report.iterations,
            last: report.residual(),
        }),
    }
}

/// Runs the configured method from `phi0`.
pub fn run(
    disc: &Discretization,
    phi0: Frame,
    options: &SolverOptions,
) -> Result<ConvergenceReport> {
    options.check()?;
    disc.check_frame(&phi0)?;
    if options.method.is_newton() {
        newton_run(disc, phi0, options)
    } else {
        run_gradient(disc, phi0, options, 1.0)
    }
}

/// Plain (all components from the same state) gradient descent.
pub fn rgd_run(
    disc: &Discretization,
    phi0: Frame,
    options: &SolverOptions,
) -> Result<ConvergenceReport> {
    run(
        disc,
        phi0,
        &SolverOptions {
            alternating: false,
            ..options.clone()
        },
    )
}

/// Alternating gradient descent.
pub fn alternating_rgd_run(
    disc: &Discretization,
    phi0: Frame,
    options: &SolverOptions,
) -> Result<ConvergenceReport> {
    run(
        disc,
        phi0,
        &SolverOptions {
            alternating: true,
            ..options.clone()
        },
    )
}

struct Direction {
    g: Vec<f64>,
    /// `r_jᵀ g`, the decrease rate of the energy along `−g`.
    slope: f64,
    work: Work,
}

/// Search direction of one component from its Hamiltonian `a`, for the
/// state column `phi_j` with residual `r_j` and Rayleigh quotient `sigma`.
#[allow(clippy::too_many_arguments)]
fn component_direction(
    disc: &Discretization,
    quad: &[Vec<f64>],
    a: &SparseSymMatrix,
    phi_j: &[f64],
    r_j: &[f64],
    sigma: f64,
    j: usize,
    options: &SolverOptions,
    tol: f64,
) -> Result<Direction> {
    let mut work = Work::default();
    let nj = disc.masses()[j];
    let mphi = disc.mass().mul_vec(phi_j);
    let precond = disc.preconditioner(j);
    let solve =
        |op: &SparseSymMatrix, b: &[f64], work: &mut Work, lagrangian: bool| -> Result<Vec<f64>> {
            let mut x = vec![0.0; b.len()];
            let stats = pcg(
                |v, y| op.mul_vec_into(v, y),
                b,
                &mut x,
                precond,
                &Stopping::relative(tol, 10 * b.len() + 100),
            );
            work.add_stats(&stats);
            if stats.breakdown {
                return Err(if lagrangian {
                    Error::MetricFailure { component: j }
                } else {
                    Error::LinearSolver(format!("Hamiltonian solve broke down for component {j}"))
                });
            }
            if !stats.converged {
                return Err(Error::LinearSolver(format!(
                    "inner solve for component {j} stalled at relative residual {:e}",
                    stats.rel_residual
                )));
            }
            Ok(x)
        };
    let g = match options.method {
        Method::EaRgd => {
            let w = solve(a, r_j, &mut work, false)?;
            let d = dot(&mphi, &w) / nj;
            let denom = 1.0 - d;
            phi_j
                .iter()
                .zip(&w)
                .map(|(f, wi)| f - (f - wi) / denom)
                .collect()
        }
        Method::Pl2Rgd => {
            let w = solve(a, r_j, &mut work, false)?;
            let c = dot(&mphi, &w) / nj;
            w.iter().zip(phi_j).map(|(wi, f)| wi - c * f).collect()
        }
        Method::LgrRgd => {
            let g_op = disc.operator_from_quadrature(quad, j, 2.0, options.omega() * sigma);
            let mut v = solve(&g_op, r_j, &mut work, true)?;
            let w = solve(&g_op, &mphi, &mut work, true)?;
            let theta = dot(&mphi, &v) / dot(&mphi, &w);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi -= theta * wi;
            }
            v
        }
        Method::Rn | Method::RegRn => unreachable!("Newton methods have no gradient step"),
    };
    let slope = dot(r_j, &g);
    Ok(Direction { g, slope, work })
}

fn is_finite_frame(phi: &Frame) -> bool {
    phi.iter().all(|v| v.is_finite())
}

/// Retracts `phi_j − t g` into `out`.
fn step_column(
    disc: &Discretization,
    phi_j: &[f64],
    g: &[f64],
    t: f64,
    j: usize,
    out: &mut [f64],
) -> Result<()> {
    for ((o, f), gi) in out.iter_mut().zip(phi_j).zip(g) {
        *o = f - t * gi;
    }
    retract_column(disc.mass(), out, disc.masses()[j], j)
}

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_HALVINGS: usize = 30;

/// Gradient methods; `inner_factor` scales the adaptive inner tolerance.
fn run_gradient(
    disc: &Discretization,
    mut phi: Frame,
    options: &SolverOptions,
    inner_factor: f64,
) -> Result<ConvergenceReport> {
    let start = Instant::now();
    let dim = disc.space().dim();

    let mut records = Vec::new();
    let mut iterations = 0;
    let termination = loop {
        let t0 = Instant::now();
        let ham = disc.hamiltonian(&phi);
        let residual = ham.residual(disc, &phi);
        let norms_sq = options.residual_norm.norms_sq(disc, &residual.r)?;
        let res = norms_sq.iter().sum::<f64>().sqrt();
        let energy = ham.energy(disc, &phi);
        records.push(IterationRecord {
            iter: iterations,
            energy,
            residual: res,
            sigma: residual.sigma.clone(),
            inner_matvecs: 0,
            wall_ms: 0.0,
        });
        if !energy.is_finite() {
            break Termination::NonFinite;
        }
        match stop_check(res, options.tol) {
            StopDecision::Converged => break Termination::Converged,
            StopDecision::Abort => break Termination::NonFinite,
            StopDecision::Continue => {}
        }
        if iterations >= options.max_outer {
            break Termination::MaxIterations;
        }
        let tols: Vec<f64> = norms_sq
            .iter()
            .map(|r2| (inner_factor * options.inner.tolerance(dim, r2.sqrt())).max(1e-16))
            .collect();
        let mut work = Work::default();
        let outcome = if options.alternating {
            alternating_sweep(
                disc, &mut phi, &ham, &residual, &tols, options, energy, &mut work,
            )
        } else {
            simultaneous_step(
                disc, &mut phi, &ham, &residual, &tols, options, energy, &mut work,
            )
        };
        match outcome {
            Ok(()) => {}
            Err(Error::MetricFailure { component }) => {
                break Termination::MetricFailure { component }
            }
            Err(Error::NonFinite(_)) => break Termination::NonFinite,
            Err(e) => return Err(e),
        }
        iterations += 1;
        let rec = records.last_mut().expect("pushed above");
        rec.inner_matvecs = work.matvecs;
        rec.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        if !is_finite_frame(&phi) {
            break Termination::NonFinite;
        }
    };
    Ok(ConvergenceReport {
        method: options.method,
        alternating: options.alternating,
        records,
        termination,
        state: phi,
        iterations,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[allow(clippy::too_many_arguments)]
fn simultaneous_step(
    disc: &Discretization,
    phi: &mut Frame,
    ham: &crate::operators::Hamiltonian,
    residual: &crate::operators::Residual,
    tols: &[f64],
    options: &SolverOptions,
    energy: f64,
    work: &mut Work,
) -> Result<()> {
    use rayon::prelude::*;
    let quad = ham.quadrature_values();
    let dirs: Vec<Direction> = (0..disc.p())
        .into_par_iter()
        .map(|j| {
            component_direction(
                disc,
                quad,
                ham.a(j),
                col(phi, j),
                col(&residual.r, j),
                residual.sigma[j],
                j,
                options,
                tols[j],
            )
        })
        .collect::<Result<_>>()?;
    let slope: f64 = dirs.iter().map(|d| d.slope).sum();
    dirs.iter().for_each(|d| *work += d.work);
    let mut t = options.tau;
    let mut halvings = 0;
    loop {
        let mut trial = phi.clone();
        for (j, d) in dirs.iter().enumerate() {
            step_column(disc, col(phi, j), &d.g, t, j, col_mut(&mut trial, j))?;
        }
        if !options.armijo
            || disc.energy(&trial) <= energy - ARMIJO_C * t * slope
            || halvings == ARMIJO_HALVINGS
        {
            *phi = trial;
            return Ok(());
        }
        t *= 0.5;
        halvings += 1;
    }
}

/// One sweep over the components; component `j` sees the Hamiltonian of the
/// frame in which components `0..j` are already updated.
#[allow(clippy::too_many_arguments)]
fn alternating_sweep(
    disc: &Discretization,
    phi: &mut Frame,
    ham: &crate::operators::Hamiltonian,
    residual: &crate::operators::Residual,
    tols: &[f64],
    options: &SolverOptions,
    energy: f64,
    work: &mut Work,
) -> Result<()> {
    let mut quad = ham.quadrature_values().to_vec();
    let mut energy = energy;
    for j in 0..disc.p() {
        let fresh;
        let (a, r_j, sigma, tol) = if j == 0 {
            (
                ham.a(0),
                col(&residual.r, 0).to_vec(),
                residual.sigma[0],
                tols[0],
            )
        } else {
            fresh = disc.operator_from_quadrature(&quad, j, 0.0, 0.0);
            let phi_j = col(phi, j);
            let sigma = fresh.quad_form(phi_j) / disc.masses()[j];
            let aphi = fresh.mul_vec(phi_j);
            let mphi = disc.mass().mul_vec(phi_j);
            let r: Vec<f64> = aphi.iter().zip(&mphi).map(|(a, m)| a - sigma * m).collect();
            (&fresh, r, sigma, tols[j])
        };
        let d = component_direction(disc, &quad, a, col(phi, j), &r_j, sigma, j, options, tol)?;
        *work += d.work;
        let old = col(phi, j).to_vec();
        let mut t = options.tau;
        let mut halvings = 0;
        loop {
            step_column(disc, &old, &d.g, t, j, col_mut(phi, j))?;
            if !options.armijo {
                break;
            }
            let e = disc.energy(phi);
            if e <= energy - ARMIJO_C * t * d.slope || halvings == ARMIJO_HALVINGS {
                energy = e;
                break;
            }
            t *= 0.5;
            halvings += 1;
        }
        quad[j] = disc.at_quadrature(col(phi, j));
    }
    Ok(())
}

/// Projected preconditioner for the dual Newton system: maps a dual
/// residual `s` (with `φ_jᵀ s_j = 0`) to the tangent vector
/// `C⁻¹s − C⁻¹Mφ (φᵀMC⁻¹s)/(φᵀMC⁻¹Mφ)` columnwise, `C = ILU(A_0,j)`.
struct NewtonPreconditioner<'a> {
    disc: &'a Discretization,
    n: usize,
    mphi: Vec<Vec<f64>>,
    cmphi: Vec<Vec<f64>>,
    denom: Vec<f64>,
}

impl<'a> NewtonPreconditioner<'a> {
    fn new(disc: &'a Discretization, phi: &Frame) -> Self {
        let n = disc.n();
        let mut mphi = Vec::new();
        let mut cmphi = Vec::new();
        let mut denom = Vec::new();
        for j in 0..disc.p() {
            let m = disc.mass().mul_vec(col(phi, j));
            let mut c = vec![0.0; n];
            disc.preconditioner(j).apply(&m, &mut c);
            denom.push(dot(&m, &c));
            mphi.push(m);
            cmphi.push(c);
        }
        Self {
            disc,
            n,
            mphi,
            cmphi,
            denom,
        }
    }
}

impl Preconditioner for NewtonPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.n;
        for j in 0..self.mphi.len() {
            let (rj, zj) = (&r[j * n..(j + 1) * n], &mut z[j * n..(j + 1) * n]);
            self.disc.preconditioner(j).apply(rj, zj);
            let c = dot(&self.mphi[j], zj) / self.denom[j];
            for (zi, wi) in zj.iter_mut().zip(&self.cmphi[j]) {
                *zi -= c * wi;
            }
        }
    }
}

/// Solution of one Newton system.
#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub z: Frame,
    pub stats: crate::linalg::SolveStats,
}

/// Solves `H_ω Z = −R_Φ Φ` on the tangent space at `phi` by projected
/// conjugate gradients; the residual is measured in the norm `‖M⁻¹·‖_M`.
pub fn projected_solve(
    disc: &Discretization,
    ham: &crate::operators::Hamiltonian,
    phi: &Frame,
    sigma: &[f64],
    rhs: &Frame,
    omega: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<NewtonStep> {
    let (n, p) = (disc.n(), disc.p());
    let mut b = rhs.clone();
    project_dual(disc, phi, &mut b);
    let b_norm = disc.residual_norm(&b)?;
    let precond = NewtonPreconditioner::new(disc, phi);
    let inv_diag = disc.mass_solver().inv_diag();
    let target = rel_tol * b_norm;
    // Diagonal scaling approximates M⁻¹ within a small factor; the exact
    // norm (mass solves) is only computed once the estimate is close.
    let norm = |s: &[f64]| -> f64 {
        let approx: f64 = s
            .chunks(n)
            .map(|c| c.iter().zip(inv_diag).map(|(v, d)| v * v * d).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if approx > 5.0 * target {
            return approx;
        }
        s.chunks(n)
            .map(|c| disc.mass_solver().dual_norm_sq(c).unwrap_or(f64::INFINITY))
            .sum::<f64>()
            .sqrt()
    };
    let stop = Stopping {
        tol: rel_tol,
        max_iter,
        norm: Some(&norm),
        reference: Some(b_norm),
    };
    let mut x = vec![0.0; n * p];
    let stats = pcg(
        |v, y| {
            let z = Frame::from_column_slice(n, p, v);
            let hz = ham.hessian_dual(disc, phi, sigma, &z, omega);
            y.copy_from_slice(hz.as_slice());
        },
        b.as_slice(),
        &mut x,
        &precond,
        &stop,
    );
    let mut stats = stats;
    // One Hessian application costs p operator products.
    stats.matvecs *= p;
    Ok(NewtonStep {
        z: Frame::from_column_slice(n, p, &x),
        stats,
    })
}

/// Riemannian Newton (`ω = 1`) and regularized Newton (`ω < 1`).
pub fn newton_run(
    disc: &Discretization,
    mut phi: Frame,
    options: &SolverOptions,
) -> Result<ConvergenceReport> {
    let start = Instant::now();
    let dim = disc.space().dim();
    let omega = options.omega();
    let mut records = Vec::new();
    let mut iterations = 0;
    let termination = loop {
        let t0 = Instant::now();
        let ham = disc.hamiltonian(&phi);
        let residual = ham.residual(disc, &phi);
        let norms_sq = options.residual_norm.norms_sq(disc, &residual.r)?;
        let res = norms_sq.iter().sum::<f64>().sqrt();
        let energy = ham.energy(disc, &phi);
        records.push(IterationRecord {
            iter: iterations,
            energy,
            residual: res,
            sigma: residual.sigma.clone(),
            inner_matvecs: 0,
            wall_ms: 0.0,
        });
        if !energy.is_finite() {
            break Termination::NonFinite;
        }
        match stop_check(res, options.tol) {
            StopDecision::Converged => break Termination::Converged,
            StopDecision::Abort => break Termination::NonFinite,
            StopDecision::Continue => {}
        }
        if iterations >= options.max_outer {
            break Termination::MaxIterations;
        }
        let tol = options.inner.tolerance(dim, res);
        let rhs = -&residual.r;
        let step = projected_solve(
            disc,
            &ham,
            &phi,
            &residual.sigma,
            &rhs,
            omega,
            tol,
            options.newton_max_inner,
        )?;
        let mut matvecs = step.stats.matvecs;
        if step.stats.breakdown {
            if !options.hybrid {
                records.last_mut().expect("pushed").inner_matvecs = matvecs;
                break Termination::InnerBreakdown { iter: iterations };
            }
            let fallback = SolverOptions {
                method: Method::EaRgd,
                alternating: false,
                armijo: false,
                ..options.clone()
            };
            let tols: Vec<f64> = norms_sq
                .iter()
                .map(|r2| options.inner.tolerance(dim, r2.sqrt()))
                .collect();
            let mut work = Work::default();
            simultaneous_step(
                disc, &mut phi, &ham, &residual, &tols, &fallback, energy, &mut work,
            )?;
            matvecs += work.matvecs;
        } else {
            let next = &phi + &step.z;
            match retract(disc.mass(), &next, disc.masses()) {
                Ok(f) => phi = f,
                Err(Error::NonFinite(_)) => break Termination::NonFinite,
                Err(e) => return Err(e),
            }
        }
        iterations += 1;
        let rec = records.last_mut().expect("pushed");
        rec.inner_matvecs = matvecs;
        rec.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        if !is_finite_frame(&phi) {
            break Termination::NonFinite;
        }
    };
    Ok(ConvergenceReport {
        method: options.method,
        alternating: false,
        records,
        termination,
        state: phi,
        iterations,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
