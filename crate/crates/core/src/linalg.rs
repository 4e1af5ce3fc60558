//! Sparse preconditioners and the preconditioned conjugate gradient method.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{Pattern, SparseSymMatrix};

/// `z ≈ A⁻¹ r` for some fixed symmetric positive definite `A`.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// No preconditioning.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        let inv_diag = a
            .diagonal()
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(Error::ZeroPivot { row: i })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { inv_diag })
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Incomplete LU factorization without fill-in, stored on the matrix pattern.
///
/// `L` is unit lower triangular; `U` keeps its diagonal in place.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    pattern: Arc<Pattern>,
    lu: Vec<f64>,
}

impl Ilu0 {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        let pattern = Arc::clone(a.pattern());
        let p = &*pattern;
        let (row_ptr, col_idx, diag) = (p.row_ptr(), p.col_idx(), p.diag_idx());
        let mut lu = a.values().to_vec();
        let scale = a.max_abs();
        // Scatter map of the current row: column -> value position.
        let mut pos = vec![usize::MAX; p.n()];
        for i in 0..p.n() {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = k;
            }
            for k in row_ptr[i]..diag[i] {
                let kc = col_idx[k];
                let pivot = lu[diag[kc]];
                let factor = lu[k] / pivot;
                lu[k] = factor;
                for m in diag[kc] + 1..row_ptr[kc + 1] {
                    let t = pos[col_idx[m]];
                    if t != usize::MAX {
                        lu[t] -= factor * lu[m];
                    }
                }
            }
            let d = lu[diag[i]];
            if !(d.abs() > 1e-14 * scale) || !d.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = usize::MAX;
            }
        }
        Ok(Self { pattern, lu })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let p = &*self.pattern;
        let (row_ptr, col_idx, diag) = (p.row_ptr(), p.col_idx(), p.diag_idx());
        for i in 0..p.n() {
            let mut acc = r[i];
            for k in row_ptr[i]..diag[i] {
                acc -= self.lu[k] * z[col_idx[k]];
            }
            z[i] = acc;
        }
        for i in (0..p.n()).rev() {
            let mut acc = z[i];
            for k in diag[i] + 1..row_ptr[i + 1] {
                acc -= self.lu[k] * z[col_idx[k]];
            }
            z[i] = acc / self.lu[diag[i]];
        }
    }
}

/// Work summary of one iterative solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Operator applications, including the initial residual.
    pub matvecs: usize,
    /// Final residual relative to the right-hand side, in the stopping norm.
    pub rel_residual: f64,
    pub converged: bool,
    /// A search direction with `pᵀAp ≤ 0` was met.
    pub breakdown: bool,
}

/// Stopping rule for [`pcg`]: `‖r‖ ≤ tol · ‖b‖` with `‖·‖` given by `norm`.
pub struct Stopping<'a> {
    pub tol: f64,
    pub max_iter: usize,
    pub norm: Option<&'a dyn Fn(&[f64]) -> f64>,
    /// Known `‖b‖`, used instead of measuring the right-hand side.
    pub reference: Option<f64>,
}

impl<'a> Stopping<'a> {
    pub fn relative(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            norm: None,
            reference: None,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for `A x = b` starting from `x`.
///
/// `a` computes `y = A v`. Returns on convergence, on breakdown
/// (`pᵀAp ≤ 0`, with `x` holding the last iterate) or after `max_iter` steps.
pub fn pcg(
    mut a: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    stop: &Stopping<'_>,
) -> SolveStats {
    let n = b.len();
    let measure = |v: &[f64]| stop.norm.map_or_else(|| norm2(v), |f| f(v));
    let mut stats = SolveStats::default();
    let b_norm = stop.reference.unwrap_or_else(|| measure(b));
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        stats.converged = true;
        return stats;
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    if x.iter().any(|&v| v != 0.0) {
        a(x, &mut ap);
        stats.matvecs += 1;
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
    } else {
        r.copy_from_slice(b);
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    stats.rel_residual = measure(&r) / b_norm;
    while stats.rel_residual > stop.tol && stats.iterations < stop.max_iter {
        a(&p, &mut ap);
        stats.matvecs += 1;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            stats.breakdown = true;
            return stats;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        stats.iterations += 1;
        stats.rel_residual = measure(&r) / b_norm;
        if !stats.rel_residual.is_finite() {
            return stats;
        }
        if stats.rel_residual <= stop.tol {
            break;
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    stats.converged = stats.rel_residual <= stop.tol;
    stats
}

/// Solves `A x = b` for a sparse SPD `A`; failures become [`Error::LinearSolver`].
pub fn solve_spd(
    a: &SparseSymMatrix,
    b: &[f64],
    precond: &dyn Preconditioner,
    tol: f64,
) -> Result<(Vec<f64>, SolveStats)> {
    let mut x = vec![0.0; b.len()];
    let max_iter = 10 * b.len() + 100;
    let stats = pcg(
        |v, y| a.mul_vec_into(v, y),
        b,
        &mut x,
        precond,
        &Stopping::relative(tol, max_iter),
    );
    if stats.breakdown {
        return Err(Error::LinearSolver(
            "conjugate gradients broke down on a matrix that should be positive definite".into(),
        ));
    }
    if !stats.converged {
        return Err(Error::LinearSolver(format!(
            "conjugate gradients stalled at relative residual {:e} after {} iterations",
            stats.rel_residual, stats.iterations
        )));
    }
    Ok((x, stats))
}

/// Mass matrix solver with a fixed tight tolerance.
#[derive(Debug, Clone)]
pub struct MassSolver {
    mass: SparseSymMatrix,
    jacobi: Jacobi,
    tol: f64,
}

impl MassSolver {
    pub const DEFAULT_TOL: f64 = 1e-13;

    pub fn new(mass: SparseSymMatrix) -> Result<Self> {
        let jacobi = Jacobi::new(&mass)?;
        Ok(Self {
            mass,
            jacobi,
            tol: Self::DEFAULT_TOL,
        })
    }

    pub fn matrix(&self) -> &SparseSymMatrix {
        &self.mass
    }

    /// Inverse diagonal of `M`, a cheap spectrally equivalent stand-in for `M⁻¹`.
    pub fn inv_diag(&self) -> &[f64] {
        self.jacobi.inv_diag()
    }

    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        solve_spd(&self.mass, b, &self.jacobi, self.tol)
    }

    /// `rᵀ M⁻¹ r`.
    pub fn dual_norm_sq(&self, r: &[f64]) -> Result<f64> {
        Ok(dot(r, &self.solve(r)?.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, Boundary, FemSpace, Interval};

    fn operators(dim: usize, h: f64) -> (SparseSymMatrix, SparseSymMatrix) {
        let domain = vec![Interval::new(0.0, 1.0); dim];
        let s = FemSpace::build(&domain, h, Boundary::Natural).unwrap();
        (assemble_mass(&s), assemble_stiffness(&s))
    }

    fn residual(a: &SparseSymMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        norm2(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()) / norm2(b)
    }

    #[test]
    fn ilu_is_exact_in_one_dimension() {
        let (m, s) = operators(1, 1.0 / 16.0);
        let mut a = s.clone();
        a.add_scaled(1.0, &m);
        let ilu = Ilu0::new(&a).unwrap();
        let b: Vec<f64> = (0..a.n()).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; a.n()];
        ilu.apply(&b, &mut x);
        assert!(residual(&a, &x, &b) < 1e-13);
    }

    #[test]
    fn pcg_solves_two_dimensional_problem() {
        let (m, s) = operators(2, 1.0 / 16.0);
        let mut a = s.clone();
        a.add_scaled(10.0, &m);
        let b: Vec<f64> = (0..a.n()).map(|i| 1.0 + (i % 7) as f64).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let (x, with_ilu) = solve_spd(&a, &b, &ilu, 1e-12).unwrap();
        assert!(residual(&a, &x, &b) < 1e-11);
        let (_, plain) = solve_spd(&a, &b, &Identity, 1e-12).unwrap();
        assert!(with_ilu.iterations < plain.iterations);
        assert_eq!(with_ilu.matvecs, with_ilu.iterations);
    }

    #[test]
    fn mass_solver_is_tight() {
        let (m, _) = operators(2, 1.0 / 8.0);
        let solver = MassSolver::new(m.clone()).unwrap();
        let b: Vec<f64> = (0..m.n()).map(|i| (i as f64 * 0.3).cos()).collect();
        let (x, stats) = solver.solve(&b).unwrap();
        assert!(stats.converged);
        assert!(residual(&m, &x, &b) < 1e-12);
        assert!(solver.dual_norm_sq(&b).unwrap() > 0.0);
    }

    #[test]
    fn breakdown_on_indefinite_operator() {
        let diag = [1.0, -1.0, 2.0];
        let b = [1.0, 1.0, 1.0];
        let mut x = [0.0; 3];
        let stats = pcg(
            |v, y| {
                for i in 0..3 {
                    y[i] = diag[i] * v[i];
                }
            },
            &b,
            &mut x,
            &Identity,
            &Stopping::relative(1e-12, 10),
        );
        assert!(stats.breakdown);
    }

    #[test]
    fn singular_stiffness_has_zero_pivot() {
        let (_, s) = operators(1, 0.25);
        assert!(matches!(Ilu0::new(&s), Err(Error::ZeroPivot { .. })));
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (m, _) = operators(1, 0.25);
        let (x, stats) = solve_spd(&m, &vec![0.0; m.n()], &Identity, 1e-12).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(stats.matvecs, 0);
    }
}
