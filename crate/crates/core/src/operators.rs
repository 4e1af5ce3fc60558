//! Discrete Gross–Pitaevskii operators: energy, Hamiltonians `A_Φ,j`,
//! coupling `B_Φ`, residuals, Riemannian gradients and Hessian actions.
//!
//! A state is an `n × p` [`Frame`] whose columns are the coefficient vectors
//! of the components on the unknowns of the finite element space.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_mass, assemble_stiffness, assemble_weighted_mass,
    interpolate_at_quadrature, FemSpace, SparseSymMatrix, Weight,
};
use crate::linalg::{dot, Ilu0, Jacobi, MassSolver, Preconditioner, SolveStats};
use crate::manifold::Metric;
use crate::model::{
    evaluate_potentials, validate, InteractionMatrix, PotentialField, ProblemSpec, ValidationReport,
};

/// Coefficient matrix, one column per component.
pub type Frame = DMatrix<f64>;

pub fn col(phi: &Frame, j: usize) -> &[f64] {
    let n = phi.nrows();
    &phi.as_slice()[j * n..(j + 1) * n]
}

pub fn col_mut(phi: &mut Frame, j: usize) -> &mut [f64] {
    let n = phi.nrows();
    &mut phi.as_mut_slice()[j * n..(j + 1) * n]
}

/// Counts of inner linear algebra work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Work {
    pub matvecs: usize,
    pub solves: usize,
}

impl Work {
    pub fn add_stats(&mut self, stats: &SolveStats) {
        self.matvecs += stats.matvecs;
        self.solves += 1;
    }
}

impl std::ops::AddAssign for Work {
    fn add_assign(&mut self, rhs: Self) {
        self.matvecs += rhs.matvecs;
        self.solves += rhs.solves;
    }
}

/// Preconditioner of the inner solves, built from `A_0,j = S + M_Vj`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    /// ILU(0), falling back to Jacobi on a zero pivot.
    #[default]
    Ilu0,
    Jacobi,
}

/// Everything that does not depend on the state: mesh, mass and stiffness
/// matrices, potentials and the per-component preconditioners built from
/// `A_0,j = S + M_Vj`.
pub struct Discretization {
    space: FemSpace,
    kappa: InteractionMatrix,
    masses: Vec<f64>,
    mass: SparseSymMatrix,
    stiffness: SparseSymMatrix,
    potentials: Vec<PotentialField>,
    base: Vec<SparseSymMatrix>,
    precond: Vec<Arc<dyn Preconditioner>>,
    mass_solver: MassSolver,
    report: ValidationReport,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("dim", &self.space.dim())
            .field("n", &self.n())
            .field("p", &self.p())
            .finish()
    }
}

impl Discretization {
    /// Validates `spec` and discretizes it with mesh width `h`.
    pub fn new(spec: &ProblemSpec, h: f64) -> Result<Self> {
        Self::with_preconditioner(spec, h, PreconditionerKind::default())
    }

    pub fn with_preconditioner(
        spec: &ProblemSpec,
        h: f64,
        kind: PreconditionerKind,
    ) -> Result<Self> {
        let report = validate(spec)?;
        report.require_assumptions()?;
        let space = FemSpace::build(&spec.domain, h, spec.bc)?;
        Self::with_space(spec, space, report, kind)
    }

    fn with_space(
        spec: &ProblemSpec,
        space: FemSpace,
        report: ValidationReport,
        kind: PreconditionerKind,
    ) -> Result<Self> {
        let potentials = evaluate_potentials(spec, &space)?;
        let mass = space.to_dofs(assemble_mass(&space));
        let stiffness = space.to_dofs(assemble_stiffness(&space));
        let mut base = Vec::with_capacity(potentials.len());
        let mut precond: Vec<Arc<dyn Preconditioner>> = Vec::with_capacity(potentials.len());
        for field in &potentials {
            let mv = assemble_weighted_mass(&space, Weight::Quadrature(&field.quadrature))?;
            let mut a0 = stiffness.clone();
            a0.add_scaled(1.0, &space.to_dofs(mv));
            precond.push(match (kind, Ilu0::new(&a0)) {
                (PreconditionerKind::Ilu0, Ok(ilu)) => Arc::new(ilu),
                // Singular A_0 (no potential, natural boundary): diagonal scaling.
                _ => Arc::new(Jacobi::new(&a0)?),
            });
            base.push(a0);
        }
        let mass_solver = MassSolver::new(mass.clone())?;
        Ok(Self {
            space,
            kappa: spec.kappa.clone(),
            masses: spec.masses.clone(),
            mass,
            stiffness,
            potentials,
            base,
            precond,
            mass_solver,
            report,
        })
    }

    pub fn space(&self) -> &FemSpace {
        &self.space
    }

    /// Number of unknowns per component.
    pub fn n(&self) -> usize {
        self.mass.n()
    }

    pub fn p(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn kappa(&self) -> &InteractionMatrix {
        &self.kappa
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    pub fn potential(&self, j: usize) -> &PotentialField {
        &self.potentials[j]
    }

    /// `A_0,j = S + M_Vj`.
    pub fn base_operator(&self, j: usize) -> &SparseSymMatrix {
        &self.base[j]
    }

    pub fn preconditioner(&self, j: usize) -> &dyn Preconditioner {
        &*self.precond[j]
    }

    pub fn mass_solver(&self) -> &MassSolver {
        &self.mass_solver
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.report
    }

    pub fn zeros(&self) -> Frame {
        Frame::zeros(self.n(), self.p())
    }

    /// Values of the finite element function with coefficients `v` at all
    /// quadrature points.
    pub fn at_quadrature(&self, v: &[f64]) -> Vec<f64> {
        interpolate_at_quadrature(&self.space, &self.space.extend(v))
    }

    pub fn frame_at_quadrature(&self, phi: &Frame) -> Vec<Vec<f64>> {
        (0..phi.ncols())
            .into_par_iter()
            .map(|j| self.at_quadrature(col(phi, j)))
            .collect()
    }

    /// `∫ g ψ_a` over the unknowns `a`, for `g` at quadrature points.
    pub fn load(&self, g: &[f64]) -> Vec<f64> {
        let full = assemble_load(&self.space, g).expect("quadrature-sized input");
        self.space.restrict(&full)
    }

    /// Weighted mass matrix on the unknowns.
    pub fn weighted_mass(&self, g: &[f64]) -> SparseSymMatrix {
        let full = assemble_weighted_mass(&self.space, Weight::Quadrature(g))
            .expect("quadrature-sized input");
        self.space.to_dofs(full)
    }

    /// `M_φiφj` on the unknowns.
    pub fn density_block(&self, phi: &Frame, i: usize, j: usize) -> SparseSymMatrix {
        let (ui, uj) = (
            self.at_quadrature(col(phi, i)),
            self.at_quadrature(col(phi, j)),
        );
        let g: Vec<f64> = ui.iter().zip(&uj).map(|(a, b)| a * b).collect();
        self.weighted_mass(&g)
    }

    /// `S + M_w` with `w = V_j + Σ_i κ_ij u_i² + self_weight·κ_jj u_j² − shift`,
    /// `u` given at the quadrature points.
    pub fn operator_from_quadrature(
        &self,
        u: &[Vec<f64>],
        j: usize,
        self_weight: f64,
        shift: f64,
    ) -> SparseSymMatrix {
        let v = &self.potentials[j].quadrature;
        let p = self.p();
        let mut w = v.clone();
        for i in 0..p {
            let k = self.kappa.get(i, j)
                + if i == j {
                    self_weight * self.kappa.get(j, j)
                } else {
                    0.0
                };
            if k != 0.0 {
                for (wq, uq) in w.iter_mut().zip(&u[i]) {
                    *wq += k * uq * uq;
                }
            }
        }
        if shift != 0.0 {
            w.iter_mut().for_each(|x| *x -= shift);
        }
        let mut a = self.weighted_mass(&w);
        a.add_scaled(1.0, &self.stiffness);
        a
    }

    /// `A_Φ,j` for the current frame.
    pub fn hamiltonian_component(&self, phi: &Frame, j: usize) -> SparseSymMatrix {
        let u = self.frame_at_quadrature(phi);
        self.operator_from_quadrature(&u, j, 0.0, 0.0)
    }

    /// Assembles all `A_Φ,j`.
    pub fn hamiltonian(&self, phi: &Frame) -> Hamiltonian {
        let quad = self.frame_at_quadrature(phi);
        let ops = (0..self.p())
            .into_par_iter()
            .map(|j| self.operator_from_quadrature(&quad, j, 0.0, 0.0))
            .collect();
        Hamiltonian { quad, ops }
    }

    /// Energy by direct quadrature of the integrand (no matrix assembly).
    pub fn energy(&self, phi: &Frame) -> f64 {
        let u = self.frame_at_quadrature(phi);
        let p = self.p();
        let mut integrand = vec![0.0; u[0].len()];
        for j in 0..p {
            let v = &self.potentials[j].quadrature;
            for (q, g) in integrand.iter_mut().enumerate() {
                let dj = u[j][q] * u[j][q];
                let mut inter = 0.0;
                for i in 0..p {
                    inter += self.kappa.get(i, j) * u[i][q] * u[i][q];
                }
                *g += 0.5 * v[q] * dj + 0.25 * inter * dj;
            }
        }
        let kinetic: f64 = (0..p)
            .map(|j| 0.5 * self.stiffness.quad_form(col(phi, j)))
            .sum();
        kinetic + crate::fem::integrate_quadrature(&self.space, &integrand)
    }

    /// Dual-form action of the coupling operator: column `k` of the result
    /// is `Σ_j 2κ_kj M_φkφj z_j`.
    pub fn apply_b(&self, quad: &[Vec<f64>], z: &Frame) -> Frame {
        let p = self.p();
        let zq = self.frame_at_quadrature(z);
        let cols: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|k| {
                let g: Vec<f64> = (0..quad[k].len())
                    .map(|q| {
                        let mut s = 0.0;
                        for j in 0..p {
                            s += self.kappa.get(k, j) * quad[j][q] * zq[j][q];
                        }
                        2.0 * quad[k][q] * s
                    })
                    .collect();
                self.load(&g)
            })
            .collect();
        frame_from_columns(self.n(), &cols)
    }

    /// `r_jᵀ M⁻¹ r_j` for every column.
    pub fn residual_norms_sq(&self, r: &Frame) -> Result<Vec<f64>> {
        (0..r.ncols())
            .into_par_iter()
            .map(|j| self.mass_solver.dual_norm_sq(col(r, j)))
            .collect()
    }

    /// `(Σ_j r_jᵀ M⁻¹ r_j)^{1/2}`.
    pub fn residual_norm(&self, r: &Frame) -> Result<f64> {
        Ok(self.residual_norms_sq(r)?.iter().sum::<f64>().sqrt())
    }

    /// `M⁻¹` applied to every column.
    pub fn mass_inverse(&self, r: &Frame) -> Result<(Frame, Work)> {
        let results: Vec<(Vec<f64>, SolveStats)> = (0..r.ncols())
            .into_par_iter()
            .map(|j| self.mass_solver.solve(col(r, j)))
            .collect::<Result<_>>()?;
        let mut work = Work::default();
        let cols: Vec<Vec<f64>> = results
            .into_iter()
            .map(|(x, s)| {
                work.add_stats(&s);
                x
            })
            .collect();
        Ok((frame_from_columns(r.nrows(), &cols), work))
    }

    pub fn mass_apply(&self, z: &Frame) -> Frame {
        let cols: Vec<Vec<f64>> = (0..z.ncols())
            .map(|j| self.mass.mul_vec(col(z, j)))
            .collect();
        frame_from_columns(z.nrows(), &cols)
    }

    /// `⟨Z, Y⟩_M = Σ_j z_jᵀ M y_j`.
    pub fn m_inner(&self, z: &Frame, y: &Frame) -> f64 {
        (0..z.ncols())
            .map(|j| self.mass.bilinear(col(z, j), col(y, j)))
            .sum()
    }

    pub fn m_norm(&self, z: &Frame) -> f64 {
        self.m_inner(z, z).max(0.0).sqrt()
    }

    /// Checks that a frame has the right shape and finite entries.
    pub fn check_frame(&self, phi: &Frame) -> Result<()> {
        if phi.nrows() != self.n() {
            return Err(Error::Shape {
                what: "frame rows",
                expected: self.n(),
                got: phi.nrows(),
            });
        }
        if phi.ncols() != self.p() {
            return Err(Error::Shape {
                what: "frame columns",
                expected: self.p(),
                got: phi.ncols(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state has non-finite entries".into()));
        }
        Ok(())
    }
}

pub(crate) fn frame_from_columns(n: usize, cols: &[Vec<f64>]) -> Frame {
    let mut out = Frame::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        col_mut(&mut out, j).copy_from_slice(c);
    }
    out
}

/// The operators `A_Φ,j` of one state, with the component values at the
/// quadrature points they were built from.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    quad: Vec<Vec<f64>>,
    ops: Vec<SparseSymMatrix>,
}

/// Columns `r_j = A_Φ,j φ_j − σ_j M φ_j` and the Rayleigh quotients `σ_j`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub r: Frame,
    pub sigma: Vec<f64>,
}

impl Hamiltonian {
    pub fn a(&self, j: usize) -> &SparseSymMatrix {
        &self.ops[j]
    }

    pub fn p(&self) -> usize {
        self.ops.len()
    }

    /// Component values at the quadrature points.
    pub fn quadrature_values(&self) -> &[Vec<f64>] {
        &self.quad
    }

    /// `σ_j = φ_jᵀ A_Φ,j φ_j / N_j`.
    pub fn rayleigh(&self, disc: &Discretization, phi: &Frame) -> Vec<f64> {
        (0..self.p())
            .map(|j| self.ops[j].quad_form(col(phi, j)) / disc.masses()[j])
            .collect()
    }

    pub fn residual(&self, disc: &Discretization, phi: &Frame) -> Residual {
        let sigma = self.rayleigh(disc, phi);
        let mut r = disc.zeros();
        for j in 0..self.p() {
            let aphi = self.ops[j].mul_vec(col(phi, j));
            let mphi = disc.mass().mul_vec(col(phi, j));
            for ((ri, a), m) in col_mut(&mut r, j).iter_mut().zip(&aphi).zip(&mphi) {
                *ri = a - sigma[j] * m;
            }
        }
        Residual { r, sigma }
    }

    /// `Σ_j φ_jᵀ(½S + ½M_Vj + ¼M_ρj)φ_j` via the assembled operators.
    pub fn energy(&self, disc: &Discretization, phi: &Frame) -> f64 {
        (0..self.p())
            .map(|j| {
                let c = col(phi, j);
                let a = self.ops[j].quad_form(c);
                let base = disc.base_operator(j).quad_form(c);
                // A = base + M_ρ, so ½base + ¼M_ρ = ¼(A + base).
                0.25 * (a + base)
            })
            .sum()
    }

    /// Dual-form regularized Hessian action
    /// `P_j((A_j − ωσ_j M) z_j + Σ_i B_ji z_i)` with `P_j = I − Mφ_jφ_jᵀ/N_j`.
    pub fn hessian_dual(
        &self,
        disc: &Discretization,
        phi: &Frame,
        sigma: &[f64],
        z: &Frame,
        omega: f64,
    ) -> Frame {
        let mut out = disc.apply_b(&self.quad, z);
        for j in 0..self.p() {
            let zj = col(z, j);
            let az = self.ops[j].mul_vec(zj);
            let mz = disc.mass().mul_vec(zj);
            let oj = col_mut(&mut out, j);
            for i in 0..oj.len() {
                oj[i] += az[i] - omega * sigma[j] * mz[i];
            }
        }
        project_dual(disc, phi, &mut out);
        out
    }

    /// Primal Hessian action `M⁻¹ P(...)`; tangent at `phi`.
    pub fn hessian_apply(
        &self,
        disc: &Discretization,
        phi: &Frame,
        sigma: &[f64],
        z: &Frame,
        omega: f64,
    ) -> Result<Frame> {
        let dual = self.hessian_dual(disc, phi, sigma, z, omega);
        let (mut primal, _) = disc.mass_inverse(&dual)?;
        // Remove the component along φ left by the inexact mass solve.
        for j in 0..self.p() {
            let nj = disc.masses()[j];
            let c = disc.mass().bilinear(col(phi, j), col(&primal, j)) / nj;
            let pj = col(phi, j).to_vec();
            for (v, f) in col_mut(&mut primal, j).iter_mut().zip(&pj) {
                *v -= c * f;
            }
        }
        Ok(primal)
    }
}

/// Applies `P_j = I − Mφ_jφ_jᵀ/N_j` to every column of a dual frame.
pub fn project_dual(disc: &Discretization, phi: &Frame, v: &mut Frame) {
    for j in 0..v.ncols() {
        let pj = col(phi, j);
        let c = dot(pj, col(v, j)) / disc.masses()[j];
        if c != 0.0 {
            let mphi = disc.mass().mul_vec(pj);
            for (x, m) in col_mut(v, j).iter_mut().zip(&mphi) {
                *x -= c * m;
            }
        }
    }
}

/// Riemannian gradient `G_j⁻¹(R_j − θ_j M)φ_j` for the given metric, with
/// inner solves to relative tolerance `tol`.
pub fn riemannian_gradient(
    disc: &Discretization,
    phi: &Frame,
    residual: &Residual,
    metric: &Metric<'_>,
    tol: f64,
) -> Result<(Frame, Work)> {
    let results: Vec<(Vec<f64>, Work)> = (0..disc.p())
        .into_par_iter()
        .map(|j| metric.gradient_column(phi, col(&residual.r, j), j, tol))
        .collect::<Result<_>>()?;
    let mut work = Work::default();
    let cols: Vec<Vec<f64>> = results
        .into_iter()
        .map(|(c, w)| {
            work += w;
            c
        })
        .collect();
    Ok((frame_from_columns(disc.n(), &cols), work))
}
