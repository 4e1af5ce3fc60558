//! The generalized oblique manifold `{Φ : ddiag(ΦᵀMΦ) = N}`: feasibility,
//! the normalization retraction, metrics and tangent projections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SparseSymMatrix;
use crate::linalg::{dot, pcg, SolveStats, Stopping};
use crate::operators::{
    col, col_mut, frame_from_columns, Discretization, Frame, Hamiltonian, Work,
};

/// Columns with `φᵀMφ` at or below this are treated as zero.
pub const DEGENERATE_NORM_SQ: f64 = 1e-300;

/// `max_j |φ_jᵀMφ_j − N_j| / N_j`.
pub fn feasibility_error(mass: &SparseSymMatrix, phi: &Frame, masses: &[f64]) -> f64 {
    masses
        .iter()
        .enumerate()
        .map(|(j, &n)| (mass.quad_form(col(phi, j)) - n).abs() / n)
        .fold(0.0, f64::max)
}

/// Rescales one column to `φᵀMφ = n_j`.
pub fn retract_column(mass: &SparseSymMatrix, c: &mut [f64], n_j: f64, j: usize) -> Result<()> {
    let norm_sq = mass.quad_form(c);
    if !(norm_sq > DEGENERATE_NORM_SQ) {
        return Err(if norm_sq.is_finite() {
            Error::DegenerateState {
                component: j,
                norm_sq,
            }
        } else {
            Error::NonFinite(format!("component {j} has M-norm² {norm_sq}"))
        });
    }
    let s = (n_j / norm_sq).sqrt();
    c.iter_mut().for_each(|v| *v *= s);
    Ok(())
}

/// Componentwise normalization `φ_j ↦ √N_j φ_j / ‖φ_j‖_M`.
pub fn retract(mass: &SparseSymMatrix, phi: &Frame, masses: &[f64]) -> Result<Frame> {
    let mut out = phi.clone();
    for (j, &n) in masses.iter().enumerate() {
        retract_column(mass, col_mut(&mut out, j), n, j)?;
    }
    Ok(out)
}

/// Riemannian metric acting on each component separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    /// `G_j = M`.
    L2,
    /// `G_j = A_Φ,j`.
    EnergyAdaptive,
    /// `G_j = A_Φ,j + B_Φ,jj − ω σ_j M`.
    Lagrangian { omega: f64 },
}

/// Metric operators of one state.
pub struct Metric<'a> {
    disc: &'a Discretization,
    kind: MetricKind,
    ops: Vec<SparseSymMatrix>,
}

impl<'a> Metric<'a> {
    /// `sigma` (the Rayleigh quotients) is only used by the Lagrangian metric.
    pub fn new(
        disc: &'a Discretization,
        ham: &Hamiltonian,
        sigma: &[f64],
        kind: MetricKind,
    ) -> Result<Self> {
        let ops = match kind {
            MetricKind::L2 => Vec::new(),
            MetricKind::EnergyAdaptive => (0..disc.p()).map(|j| ham.a(j).clone()).collect(),
            MetricKind::Lagrangian { omega } => {
                if !(omega > 0.0 && omega <= 1.0) {
                    return Err(Error::Config(format!(
                        "omega must lie in (0, 1], got {omega}"
                    )));
                }
                let quad = ham.quadrature_values();
                (0..disc.p())
                    .into_par_iter()
                    .map(|j| disc.operator_from_quadrature(quad, j, 2.0, omega * sigma[j]))
                    .collect()
            }
        };
        Ok(Self { disc, kind, ops })
    }

    /// Metric with explicitly given operators `G_j`.
    pub fn from_operators(
        disc: &'a Discretization,
        kind: MetricKind,
        ops: Vec<SparseSymMatrix>,
    ) -> Self {
        Self { disc, kind, ops }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn operator(&self, j: usize) -> &SparseSymMatrix {
        match self.kind {
            MetricKind::L2 => self.disc.mass(),
            _ => &self.ops[j],
        }
    }

    /// Dual representation: column `j` is `G_j z_j`.
    pub fn apply(&self, z: &Frame) -> Frame {
        let cols: Vec<Vec<f64>> = (0..z.ncols())
            .map(|j| self.operator(j).mul_vec(col(z, j)))
            .collect();
        frame_from_columns(z.nrows(), &cols)
    }

    /// `g(Z, Y) = Σ_j z_jᵀ G_j y_j`.
    pub fn inner(&self, z: &Frame, y: &Frame) -> f64 {
        (0..z.ncols())
            .map(|j| self.operator(j).bilinear(col(z, j), col(y, j)))
            .sum()
    }

    /// `G_j⁻¹ b` to relative tolerance `tol` (mass solves use their own tight tolerance).
    pub fn solve(&self, j: usize, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats)> {
        if self.kind == MetricKind::L2 {
            return self.disc.mass_solver().solve(b);
        }
        let a = &self.ops[j];
        let mut x = vec![0.0; b.len()];
        let stats = pcg(
            |v, y| a.mul_vec_into(v, y),
            b,
            &mut x,
            self.disc.preconditioner(j),
            &Stopping::relative(tol, 10 * b.len() + 100),
        );
        if stats.breakdown {
            return Err(match self.kind {
                MetricKind::Lagrangian { .. } => Error::MetricFailure { component: j },
                _ => Error::LinearSolver(format!(
                    "energy-adaptive metric solve broke down for component {j}"
                )),
            });
        }
        if !stats.converged {
            return Err(Error::LinearSolver(format!(
                "metric solve for component {j} stalled at relative residual {:e}",
                stats.rel_residual
            )));
        }
        Ok((x, stats))
    }

    /// `G_j⁻¹ M φ_j`; exact `φ_j` for the L² metric.
    fn solve_mphi(&self, phi_j: &[f64], j: usize, tol: f64, work: &mut Work) -> Result<Vec<f64>> {
        if self.kind == MetricKind::L2 {
            return Ok(phi_j.to_vec());
        }
        let (w, stats) = self.solve(j, &self.disc.mass().mul_vec(phi_j), tol)?;
        work.add_stats(&stats);
        Ok(w)
    }

    /// Column `j` of the Riemannian gradient, `G_j⁻¹ r_j − θ_j G_j⁻¹ M φ_j`.
    pub fn gradient_column(
        &self,
        phi: &Frame,
        r_j: &[f64],
        j: usize,
        tol: f64,
    ) -> Result<(Vec<f64>, Work)> {
        let mut work = Work::default();
        let phi_j = col(phi, j);
        let (mut v, stats) = self.solve(j, r_j, tol)?;
        work.add_stats(&stats);
        let w = self.solve_mphi(phi_j, j, tol, &mut work)?;
        let mphi = self.disc.mass().mul_vec(phi_j);
        let theta = dot(&mphi, &v) / dot(&mphi, &w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi -= theta * wi;
        }
        Ok((v, work))
    }

    /// Metric-orthogonal projection onto the tangent space at `phi`.
    pub fn project(&self, phi: &Frame, u: &Frame, tol: f64) -> Result<(Frame, Work)> {
        let mut out = u.clone();
        let mut work = Work::default();
        for j in 0..u.ncols() {
            let phi_j = col(phi, j);
            let mphi = self.disc.mass().mul_vec(phi_j);
            let w = self.solve_mphi(phi_j, j, tol, &mut work)?;
            let c = dot(&mphi, col(u, j)) / dot(&mphi, &w);
            for (o, wi) in col_mut(&mut out, j).iter_mut().zip(&w) {
                *o -= c * wi;
            }
        }
        Ok((out, work))
    }
}

/// `max_j |φ_jᵀ M z_j|`.
pub fn tangency_error(mass: &SparseSymMatrix, phi: &Frame, z: &Frame) -> f64 {
    (0..phi.ncols())
        .map(|j| mass.bilinear(col(phi, j), col(z, j)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Boundary, Interval};
    use crate::model::{InteractionMatrix, PotentialSpec, ProblemSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(bc: Boundary) -> Discretization {
        let spec = ProblemSpec {
            domain: vec![Interval::new(-2.0, 2.0)],
            masses: vec![1.0, 0.5],
            kappa: InteractionMatrix::new(vec![vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap(),
            potentials: vec![PotentialSpec::harmonic(1.0), PotentialSpec::harmonic(2.0)],
            bc,
        };
        Discretization::new(&spec, 0.25).unwrap()
    }

    fn random(d: &Discretization, rng: &mut ChaCha8Rng) -> Frame {
        Frame::from_fn(d.n(), d.p(), |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn retraction_is_feasible_and_scale_invariant() {
        let d = disc(Boundary::Natural);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random(&d, &mut rng);
        let r = retract(d.mass(), &phi, d.masses()).unwrap();
        assert!(feasibility_error(d.mass(), &r, d.masses()) <= 1e-12);
        let again = retract(d.mass(), &r, d.masses()).unwrap();
        assert!((&again - &r).abs().max() <= 1e-15);
        let mut scaled = phi.clone();
        scaled.column_mut(0).scale_mut(3.5);
        let rs = retract(d.mass(), &scaled, d.masses()).unwrap();
        assert!((&rs - &r).abs().max() <= 1e-14);
        let mut doubled = r.clone();
        doubled.column_mut(1).scale_mut(2.0);
        assert!((feasibility_error(d.mass(), &doubled, d.masses()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_column_is_degenerate() {
        let d = disc(Boundary::Natural);
        let mut phi = Frame::from_element(d.n(), 2, 1.0);
        phi.column_mut(1).fill(0.0);
        assert!(matches!(
            retract(d.mass(), &phi, d.masses()),
            Err(Error::DegenerateState { component: 1, .. })
        ));
    }

    #[test]
    fn projections_are_tangent_and_idempotent() {
        let d = disc(Boundary::Dirichlet);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Smooth positive state: the Lagrangian metric is only definite near ground states.
        let s = d.space();
        let bump = Frame::from_fn(d.n(), 2, |i, j| {
            let x = s.node_coords(s.free_nodes()[i])[0];
            (std::f64::consts::FRAC_PI_4 * x).cos() * (1.0 + 0.1 * j as f64 * x)
        });
        let phi = retract(d.mass(), &bump, d.masses()).unwrap();
        let ham = d.hamiltonian(&phi);
        let sigma = ham.rayleigh(&d, &phi);
        for kind in [
            MetricKind::L2,
            MetricKind::EnergyAdaptive,
            MetricKind::Lagrangian { omega: 0.5 },
        ] {
            let metric = Metric::new(&d, &ham, &sigma, kind).unwrap();
            let u = random(&d, &mut rng);
            let (pu, _) = metric.project(&phi, &u, 1e-14).unwrap();
            let scale = d.m_norm(&u);
            assert!(tangency_error(d.mass(), &phi, &pu) <= 1e-10 * scale);
            let (ppu, _) = metric.project(&phi, &pu, 1e-14).unwrap();
            assert!(d.m_norm(&(&ppu - &pu)) <= 1e-10 * scale);
            let y = random(&d, &mut rng);
            let (a, b) = (metric.inner(&u, &y), metric.inner(&y, &u));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let l2 = Metric::new(&d, &ham, &sigma, MetricKind::L2).unwrap();
        let (p_phi, _) = l2.project(&phi, &phi, 1e-14).unwrap();
        assert!(p_phi.abs().max() < 1e-14);
    }
}
