//! Dense brute-force references for small meshes.
//!
//! Nothing in here uses the sparse assembly: the quadratic Lagrange basis,
//! the Gauss–Legendre rule and all matrices are rebuilt from the mesh
//! geometry, so agreement with [`crate::operators`] is a real check.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{Boundary, FemSpace, QUAD_POINTS_1D};
use crate::manifold::{Metric, MetricKind};
use crate::model::{point_potential, ProblemSpec};
use crate::operators::{riemannian_gradient, Discretization, Frame};

/// Largest number of unknowns the dense oracles accept.
pub const MAX_DOFS: usize = 500;

/// Points per axis added to the production rule by default.
pub const OVERSAMPLE: usize = 3;

/// Residual at which the SCF oracle stops.
pub const SCF_TOL: f64 = 1e-13;

/// Stagnation below this residual is accepted as converged: the dual norm
/// of `Aφ − σMφ` cannot be computed more accurately in double precision.
pub const SCF_FLOOR: f64 = 1e-12;

pub const SCF_MIN_MIXING: f64 = 1.0 / 64.0;
pub const SCF_MAX_SWEEPS: usize = 100_000;

/// Gauss–Legendre nodes (ascending) and weights on `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p0 = 1.0;
            }
            dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Quadratic Lagrange basis on `[0, 1]` (nodes 0, ½, 1) and its derivative.
fn lagrange(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [
            2.0 * t * t - 3.0 * t + 1.0,
            4.0 * t * (1.0 - t),
            2.0 * t * t - t,
        ],
        [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
    )
}

/// One quadrature point with the basis functions of its element.
struct Point {
    x: [f64; 2],
    w: f64,
    nodes: Vec<usize>,
    val: Vec<f64>,
    grad: Vec<[f64; 2]>,
}

/// Tensor-product mesh rebuilt from the geometry of a [`FemSpace`].
struct Mesh {
    dim: usize,
    lo: [f64; 2],
    h: f64,
    elems: [usize; 2],
    nx: usize,
    dof: Vec<Option<usize>>,
    n: usize,
}

impl Mesh {
    fn new(space: &FemSpace) -> Self {
        let dim = space.dim();
        let dom = space.domain();
        let e = space.elements_per_axis();
        let elems = [e[0], if dim == 2 { e[1] } else { 1 }];
        let nx = 2 * elems[0] + 1;
        let ny = if dim == 2 { 2 * elems[1] + 1 } else { 1 };
        let mut dof = Vec::with_capacity(nx * ny);
        let mut n = 0;
        for iy in 0..ny {
            for ix in 0..nx {
                let edge = ix == 0 || ix == nx - 1 || (dim == 2 && (iy == 0 || iy == ny - 1));
                if space.bc() == Boundary::Dirichlet && edge {
                    dof.push(None);
                } else {
                    dof.push(Some(n));
                    n += 1;
                }
            }
        }
        Self {
            dim,
            lo: [dom[0].lo, if dim == 2 { dom[1].lo } else { 0.0 }],
            h: space.h(),
            elems,
            nx,
            dof,
            n,
        }
    }

    fn for_each_point(&self, m: usize, mut f: impl FnMut(&Point)) {
        let (gx, gw) = gauss_legendre(m);
        let h = self.h;
        let mut pt = Point {
            x: [0.0; 2],
            w: 0.0,
            nodes: Vec::new(),
            val: Vec::new(),
            grad: Vec::new(),
        };
        for ey in 0..self.elems[1] {
            for ex in 0..self.elems[0] {
                let x0 = self.lo[0] + ex as f64 * h;
                let y0 = self.lo[1] + ey as f64 * h;
                if self.dim == 1 {
                    for (t, wt) in gx.iter().zip(&gw) {
                        let (v, d) = lagrange(*t);
                        pt.x = [x0 + t * h, 0.0];
                        pt.w = wt * h;
                        pt.nodes = (0..3).map(|a| 2 * ex + a).collect();
                        pt.val = v.to_vec();
                        pt.grad = d.iter().map(|g| [g / h, 0.0]).collect();
                        f(&pt);
                    }
                    continue;
                }
                for (s, ws) in gx.iter().zip(&gw) {
                    for (t, wt) in gx.iter().zip(&gw) {
                        let (vx, dx) = lagrange(*t);
                        let (vy, dy) = lagrange(*s);
                        pt.x = [x0 + t * h, y0 + s * h];
                        pt.w = wt * ws * h * h;
                        pt.nodes.clear();
                        pt.val.clear();
                        pt.grad.clear();
                        for b in 0..3 {
                            for a in 0..3 {
                                pt.nodes.push((2 * ey + b) * self.nx + 2 * ex + a);
                                pt.val.push(vx[a] * vy[b]);
                                pt.grad.push([dx[a] * vy[b] / h, vx[a] * dy[b] / h]);
                            }
                        }
                        f(&pt);
                    }
                }
            }
        }
    }
}

/// Dense model of a [`ProblemSpec`] on a small mesh.
pub struct DenseProblem {
    mesh: Mesh,
    points: usize,
    masses: Vec<f64>,
    kappa: DMatrix<f64>,
    potentials: Vec<Box<dyn Fn(&[f64]) -> f64>>,
    mass: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    stiffness: DMatrix<f64>,
    potential_mass: Vec<DMatrix<f64>>,
}

impl DenseProblem {
    /// Uses `QUAD_POINTS_1D + oversample` Gauss points per axis.
    pub fn new(spec: &ProblemSpec, space: &FemSpace, oversample: usize) -> Result<Self> {
        let mesh = Mesh::new(space);
        if mesh.n > MAX_DOFS {
            return Err(Error::Oracle(format!(
                "{} unknowns exceed the dense limit of {MAX_DOFS}",
                mesh.n
            )));
        }
        let potentials = spec
            .potentials
            .iter()
            .map(|pot| {
                point_potential(pot, space)?
                    .ok_or_else(|| Error::Oracle("nodal potential files are not supported".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut dp = Self {
            mesh,
            points: QUAD_POINTS_1D + oversample,
            masses: spec.masses.clone(),
            kappa: spec.kappa.to_dense(),
            potentials,
            mass: DMatrix::zeros(0, 0),
            mass_chol: Cholesky::new(DMatrix::identity(1, 1)).expect("identity"),
            stiffness: DMatrix::zeros(0, 0),
            potential_mass: Vec::new(),
        };
        dp.mass = dp.assemble(|_| 1.0);
        dp.mass_chol = Cholesky::new(dp.mass.clone())
            .ok_or_else(|| Error::Oracle("mass matrix is not positive definite".into()))?;
        dp.stiffness = dp.assemble_grad();
        dp.potential_mass = (0..dp.p())
            .map(|j| {
                let v = &dp.potentials[j];
                dp.assemble(|pt| v(&pt.x[..dp.mesh.dim]))
            })
            .collect();
        Ok(dp)
    }

    pub fn n(&self) -> usize {
        self.mesh.n
    }

    pub fn p(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    fn assemble(&self, weight: impl Fn(&Point) -> f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.mesh.n, self.mesh.n);
        self.mesh.for_each_point(self.points, |pt| {
            let c = pt.w * weight(pt);
            for (a, &na) in pt.nodes.iter().enumerate() {
                let Some(i) = self.mesh.dof[na] else { continue };
                for (b, &nb) in pt.nodes.iter().enumerate() {
                    if let Some(k) = self.mesh.dof[nb] {
                        out[(i, k)] += c * pt.val[a] * pt.val[b];
                    }
                }
            }
        });
        out
    }

    fn assemble_grad(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.mesh.n, self.mesh.n);
        self.mesh.for_each_point(self.points, |pt| {
            for (a, &na) in pt.nodes.iter().enumerate() {
                let Some(i) = self.mesh.dof[na] else { continue };
                for (b, &nb) in pt.nodes.iter().enumerate() {
                    if let Some(k) = self.mesh.dof[nb] {
                        let g = pt.grad[a][0] * pt.grad[b][0] + pt.grad[a][1] * pt.grad[b][1];
                        out[(i, k)] += pt.w * g;
                    }
                }
            }
        });
        out
    }

    /// Component values and gradients at a point.
    fn eval(&self, phi: &Frame, pt: &Point) -> (Vec<f64>, Vec<[f64; 2]>) {
        let p = phi.ncols();
        let mut u = vec![0.0; p];
        let mut g = vec![[0.0; 2]; p];
        for (a, &na) in pt.nodes.iter().enumerate() {
            let Some(i) = self.mesh.dof[na] else { continue };
            for j in 0..p {
                let c = phi[(i, j)];
                u[j] += c * pt.val[a];
                g[j][0] += c * pt.grad[a][0];
                g[j][1] += c * pt.grad[a][1];
            }
        }
        (u, g)
    }

    /// The energy integrand `Σ_j ½|∇u_j|² + ½V_j u_j² + ¼Σ_ij κ_ij u_i²u_j²`
    /// summed over the quadrature points.
    pub fn energy(&self, phi: &Frame) -> f64 {
        let p = self.p();
        let mut total = 0.0;
        self.mesh.for_each_point(self.points, |pt| {
            let (u, g) = self.eval(phi, pt);
            let mut e = 0.0;
            for j in 0..p {
                let v = (self.potentials[j])(&pt.x[..self.mesh.dim]);
                e += 0.5 * (g[j][0] * g[j][0] + g[j][1] * g[j][1]) + 0.5 * v * u[j] * u[j];
                for i in 0..p {
                    e += 0.25 * self.kappa[(i, j)] * u[i] * u[i] * u[j] * u[j];
                }
            }
            total += pt.w * e;
        });
        total
    }

    /// `A_j = S + M_Vj + M_ρj` for every component.
    pub fn hamiltonian(&self, phi: &Frame) -> Vec<DMatrix<f64>> {
        (0..self.p())
            .map(|j| {
                let rho = self.assemble(|pt| {
                    let (u, _) = self.eval(phi, pt);
                    (0..self.p())
                        .map(|i| self.kappa[(i, j)] * u[i] * u[i])
                        .sum()
                });
                &self.stiffness + &self.potential_mass[j] + rho
            })
            .collect()
    }

    /// Dual residual columns and Rayleigh quotients.
    pub fn residual(&self, phi: &Frame, a: &[DMatrix<f64>]) -> (Frame, Vec<f64>) {
        let mut r = Frame::zeros(self.n(), self.p());
        let mut sigma = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let c = phi.column(j).into_owned();
            let ac = &a[j] * &c;
            let mc = &self.mass * &c;
            let s = c.dot(&ac) / self.masses[j];
            r.set_column(j, &(ac - mc * s));
            sigma.push(s);
        }
        (r, sigma)
    }

    /// `(Σ_j r_jᵀ M⁻¹ r_j)^{1/2}`.
    pub fn dual_norm(&self, r: &Frame) -> f64 {
        let x = self.mass_chol.solve(r);
        x.dot(r).sqrt()
    }

    pub fn m_norm(&self, z: &Frame) -> f64 {
        (0..z.ncols())
            .map(|j| {
                let c = z.column(j);
                c.dot(&(&self.mass * c))
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Columnwise scaling to `φ_jᵀMφ_j = N_j`.
    pub fn normalize(&self, phi: &mut Frame) {
        for j in 0..phi.ncols() {
            let c = phi.column(j).into_owned();
            let s = (self.masses[j] / c.dot(&(&self.mass * &c))).sqrt();
            phi.column_mut(j).scale_mut(s);
        }
    }

    /// `M`-orthonormal basis (`n × (n−1)`) of `{z : φ_jᵀMz = 0}`.
    pub fn tangent_basis(&self, phi_j: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let l = self.mass_chol.l();
        let u = l.transpose() * phi_j;
        let w = u.normalize();
        // Householder reflector taking e₁ to ±w; its other columns span w⊥.
        let mut v = -w.clone();
        let s = if w[0] > 0.0 { -1.0 } else { 1.0 };
        v[0] += -s;
        let vv = v.dot(&v);
        let mut q = DMatrix::identity(n, n);
        if vv > 0.0 {
            q -= (&v * v.transpose()) * (2.0 / vv);
        }
        let q = q.columns(1, n - 1).into_owned();
        l.transpose()
            .solve_upper_triangular(&q)
            .expect("Cholesky factor is nonsingular")
    }
}

/// Energy of `phi` by direct quadrature of the integrand with
/// `QUAD_POINTS_1D + oversample` points per axis.
pub fn dense_quadrature_energy(
    spec: &ProblemSpec,
    space: &FemSpace,
    phi: &Frame,
    oversample: usize,
) -> Result<f64> {
    let dp = DenseProblem::new(spec, space, oversample)?;
    if phi.nrows() != dp.n() || phi.ncols() != dp.p() {
        return Err(Error::Shape {
            what: "state",
            expected: dp.n() * dp.p(),
            got: phi.len(),
        });
    }
    Ok(dp.energy(phi))
}

/// Outcome of [`fd_gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Worst relative error of the central difference at step `1e-4`.
    pub worst_rel_error: f64,
    /// Range of `log₁₀(err(1e-3) / err(1e-4))` over the trials.
    pub min_order: f64,
    pub max_order: f64,
    pub trials: usize,
}

pub const FD_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Random tangent frame at `phi` with unit `M`-norm.
pub fn random_tangent(disc: &Discretization, phi: &Frame, rng: &mut impl Rng) -> Frame {
    let mut z = Frame::from_fn(disc.n(), disc.p(), |_, _| rng.random_range(-1.0..1.0));
    for j in 0..disc.p() {
        let pj = phi.column(j).into_owned();
        let zj = z.column(j).into_owned();
        let mp = disc.mass().mul_vec(pj.as_slice());
        let c = zj
            .as_slice()
            .iter()
            .zip(&mp)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / disc.masses()[j];
        z.set_column(j, &(zj - pj * c));
    }
    let nrm = disc.m_norm(&z);
    z / nrm
}

/// Compares the metric pairing `g(grad E, Z)` with central differences of
/// `t ↦ E(Φ + tZ)` (dense quadrature energy) along random tangent `Z`.
pub fn fd_gradient_check(
    spec: &ProblemSpec,
    disc: &Discretization,
    phi: &Frame,
    kind: MetricKind,
    trials: usize,
    seed: u64,
) -> Result<GradientCheck> {
    let dp = DenseProblem::new(spec, disc.space(), OVERSAMPLE)?;
    let ham = disc.hamiltonian(phi);
    let residual = ham.residual(disc, phi);
    let metric = Metric::new(disc, &ham, &residual.sigma, kind)?;
    let (grad, _) = riemannian_gradient(disc, phi, &residual, &metric, 1e-14)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientCheck {
        worst_rel_error: 0.0,
        min_order: f64::INFINITY,
        max_order: f64::NEG_INFINITY,
        trials,
    };
    for _ in 0..trials {
        let z = random_tangent(disc, phi, &mut rng);
        let exact = metric.inner(&grad, &z);
        let errs: Vec<f64> = FD_STEPS
            .iter()
            .map(|&t| {
                let fd = (dp.energy(&(phi + &z * t)) - dp.energy(&(phi - &z * t))) / (2.0 * t);
                (fd - exact).abs() / exact.abs().max(fd.abs()).max(f64::MIN_POSITIVE)
            })
            .collect();
        out.worst_rel_error = out.worst_rel_error.max(errs[2]);
        let order = (errs[0] / errs[1]).log10();
        out.min_order = out.min_order.min(order);
        out.max_order = out.max_order.max(order);
    }
    Ok(out)
}

/// Converged state of the SCF oracle.
#[derive(Debug, Clone)]
pub struct DenseGroundState {
    pub phi: Frame,
    pub sigma: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
}

/// Damped self-consistent field iteration: each sweep mixes every
/// component with the lowest eigenvector of its
/// frozen Hamiltonian, then renormalizes.
pub fn dense_ground_state(spec: &ProblemSpec, space: &FemSpace) -> Result<DenseGroundState> {
    let dp = DenseProblem::new(spec, space, OVERSAMPLE)?;
    let (n, p) = (dp.n(), dp.p());
    let linv = dp
        .mass_chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("Cholesky factor is nonsingular");
    let mut phi = Frame::from_element(n, p, 1.0);
    dp.normalize(&mut phi);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut mixing: f64 = 0.5;
    let mut last = f64::INFINITY;
    for sweep in 0..SCF_MAX_SWEEPS {
        let a = dp.hamiltonian(&phi);
        let (r, sigma) = dp.residual(&phi, &a);
        let res = dp.dual_norm(&r);
        if res < 0.5 * best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
        }
        // Below SCF_TOL, or stuck at the rounding floor of the residual.
        let floor = since_best > 50 && res <= SCF_FLOOR;
        if res <= SCF_TOL || floor {
            for j in 0..p {
                if phi.column(j).sum() < 0.0 {
                    phi.column_mut(j).neg_mut();
                }
            }
            return Ok(DenseGroundState {
                phi,
                sigma,
                residual: res,
                sweeps: sweep,
            });
        }
        // A growing residual signals an oscillating fixed-point map.
        if res > last {
            mixing = (mixing * 0.5).max(SCF_MIN_MIXING);
        }
        last = res;
        if since_best > 2000 {
            return Err(Error::Oracle(format!(
                "SCF stagnated at residual {res:e} after {sweep} sweeps"
            )));
        }
        for j in 0..p {
            let c = &linv * &a[j] * linv.transpose();
            let eig = SymmetricEigen::new(c);
            let k = eig.eigenvalues.imin();
            let mut v = linv.transpose() * eig.eigenvectors.column(k);
            // Inverse iteration removes the eigensolver's O(ε‖C‖) error.
            let lam = eig.eigenvalues[k];
            let shifted = &a[j] - &dp.mass * (lam - 1e-8 * lam.abs().max(1.0));
            let lu = shifted.lu();
            for _ in 0..2 {
                if let Some(w) = lu.solve(&(&dp.mass * &v)) {
                    v = w.normalize();
                }
            }
            let old = phi.column(j).into_owned();
            if v.dot(&(&dp.mass * &old)) < 0.0 {
                v.neg_mut();
            }
            v *= (dp.masses[j] / v.dot(&(&dp.mass * &v))).sqrt();
            phi.set_column(j, &(old * (1.0 - mixing) + v * mixing));
        }
        dp.normalize(&mut phi);
    }
    Err(Error::Oracle(format!(
        "SCF did not converge in {SCF_MAX_SWEEPS} sweeps"
    )))
}

/// Spectrum of the linearized eaRGD map at a ground state.
#[derive(Debug, Clone)]
pub struct LocalRateEstimate {
    /// `μ_i = (μ_τ,i − 1 + τ)/τ` from the eigenvalues `μ_τ,i` of the map.
    pub mu: Vec<f64>,
    /// Largest imaginary part among the `μ_τ,i`.
    pub max_imag: f64,
    /// `max_i |1 − τ + τμ_i|`.
    pub rho: f64,
    pub tau: f64,
}

/// One simultaneous eaRGD step `N(φ_j − τ(A⁻¹r_j − θ_j A⁻¹Mφ_j))` in dense
/// arithmetic.
fn dense_earg_step(dp: &DenseProblem, phi: &Frame, tau: f64) -> Result<Frame> {
    let a = dp.hamiltonian(phi);
    let (r, _) = dp.residual(phi, &a);
    let mut next = phi.clone();
    for j in 0..dp.p() {
        let chol = Cholesky::new(a[j].clone())
            .ok_or_else(|| Error::Oracle(format!("A_{j} is not positive definite")))?;
        let c = phi.column(j).into_owned();
        let mc = &dp.mass * &c;
        let ar = chol.solve(&r.column(j).into_owned());
        let am = chol.solve(&mc);
        let theta = mc.dot(&ar) / mc.dot(&am);
        next.set_column(j, &(c - (ar - am * theta) * tau));
    }
    dp.normalize(&mut next);
    Ok(next)
}

/// Differentiates the eaRGD update map at `phi_star` by central differences
/// along an `M`-orthonormal tangent basis and returns its spectrum.
pub fn local_rate_oracle(
    spec: &ProblemSpec,
    space: &FemSpace,
    phi_star: &Frame,
    tau: f64,
) -> Result<LocalRateEstimate> {
    let dp = DenseProblem::new(spec, space, OVERSAMPLE)?;
    let (n, p) = (dp.n(), dp.p());
    if n * p > 1000 {
        return Err(Error::Oracle(format!("n·p = {} exceeds 1000", n * p)));
    }
    let a = dp.hamiltonian(phi_star);
    let (r, _) = dp.residual(phi_star, &a);
    let res = dp.dual_norm(&r);
    if res > 1e-10 {
        return Err(Error::Oracle(format!(
            "state is not converged (residual {res:e})"
        )));
    }
    let bases: Vec<DMatrix<f64>> = (0..p)
        .map(|j| dp.tangent_basis(&phi_star.column(j).into_owned()))
        .collect();
    let dim = p * (n - 1);
    let eps = 1e-6 * dp.m_norm(phi_star);
    let mut jac = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let (jk, col) = (k / (n - 1), k % (n - 1));
        let mut dir = Frame::zeros(n, p);
        dir.set_column(jk, &bases[jk].column(col));
        let plus = dense_earg_step(&dp, &(phi_star + &dir * eps), tau)?;
        let minus = dense_earg_step(&dp, &(phi_star - &dir * eps), tau)?;
        let d = (plus - minus) / (2.0 * eps);
        for j in 0..p {
            let coords = bases[j].transpose() * (&dp.mass * d.column(j));
            jac.view_mut((j * (n - 1), k), (n - 1, 1))
                .copy_from(&coords);
        }
    }
    let eig = jac.complex_eigenvalues();
    let max_imag = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut mu: Vec<f64> = eig.iter().map(|z| (z.re - 1.0 + tau) / tau).collect();
    mu.sort_by(f64::total_cmp);
    Ok(LocalRateEstimate {
        mu,
        max_imag,
        rho,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Interval;
    use crate::model::{InteractionMatrix, PotentialSpec};

    fn spec(
        p: usize,
        kappa: Vec<Vec<f64>>,
        pot: PotentialSpec,
        bc: Boundary,
        dom: (f64, f64),
    ) -> ProblemSpec {
        ProblemSpec {
            domain: vec![Interval::new(dom.0, dom.1)],
            masses: vec![1.0; p],
            kappa: InteractionMatrix::new(kappa).unwrap(),
            potentials: vec![pot; p],
            bc,
        }
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        for m in 1..10 {
            let (x, w) = gauss_legendre(m);
            for deg in 0..2 * m {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!(
                    (q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14,
                    "m={m} deg={deg}"
                );
            }
        }
    }

    #[test]
    fn zero_model_has_zero_energy() {
        let s = spec(
            1,
            vec![vec![0.0]],
            PotentialSpec::harmonic(0.0),
            Boundary::Natural,
            (0.0, 1.0),
        );
        let space = FemSpace::build(&s.domain, 0.25, s.bc).unwrap();
        let phi = Frame::from_element(space.n_dofs(), 1, 1.0);
        assert!(
            dense_quadrature_energy(&s, &space, &phi, OVERSAMPLE)
                .unwrap()
                .abs()
                < 1e-25
        );
    }

    #[test]
    fn oversampling_does_not_change_polynomial_energy() {
        let s = spec(
            2,
            vec![vec![2.0, 1.0], vec![1.0, 3.0]],
            PotentialSpec::harmonic(4.0),
            Boundary::Natural,
            (-2.0, 2.0),
        );
        let space = FemSpace::build(&s.domain, 0.5, s.bc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = Frame::from_fn(space.n_dofs(), 2, |_, _| rng.random_range(-1.0..1.0));
        let a = dense_quadrature_energy(&s, &space, &phi, 3).unwrap();
        let b = dense_quadrature_energy(&s, &space, &phi, 5).unwrap();
        assert!((a - b).abs() <= 1e-13 * a.abs());
    }

    #[test]
    fn refuses_large_meshes() {
        let s = spec(
            1,
            vec![vec![1.0]],
            PotentialSpec::harmonic(1.0),
            Boundary::Natural,
            (0.0, 1.0),
        );
        let space = FemSpace::build(&s.domain, 1.0 / 512.0, s.bc).unwrap();
        let phi = Frame::zeros(space.n_dofs(), 1);
        assert!(matches!(
            dense_quadrature_energy(&s, &space, &phi, OVERSAMPLE),
            Err(Error::Oracle(_))
        ));
    }

    #[test]
    fn tangent_basis_is_m_orthonormal() {
        let s = spec(
            1,
            vec![vec![1.0]],
            PotentialSpec::harmonic(1.0),
            Boundary::Dirichlet,
            (0.0, 1.0),
        );
        let space = FemSpace::build(&s.domain, 0.125, s.bc).unwrap();
        let dp = DenseProblem::new(&s, &space, OVERSAMPLE).unwrap();
        let phi = DVector::from_fn(dp.n(), |i, _| 1.0 + i as f64);
        let b = dp.tangent_basis(&phi);
        let gram = b.transpose() * dp.mass() * &b;
        assert!((gram - DMatrix::identity(dp.n() - 1, dp.n() - 1)).amax() < 1e-12);
        assert!((b.transpose() * dp.mass() * phi).amax() < 1e-12);
    }

    #[test]
    fn scf_linear_limit_is_laplace_eigenfunction() {
        let s = spec(
            1,
            vec![vec![0.0]],
            PotentialSpec::harmonic(0.0),
            Boundary::Dirichlet,
            (0.0, 1.0),
        );
        let space = FemSpace::build(&s.domain, 1.0 / 16.0, s.bc).unwrap();
        let gs = dense_ground_state(&s, &space).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((gs.sigma[0] - pi2).abs() < 1e-4 * pi2, "{}", gs.sigma[0]);
        assert!(gs.residual <= 1e-12);
        assert!(gs.phi.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn scf_decoupled_components_solve_independently() {
        let pot = PotentialSpec::harmonic(1.0);
        let dom = (-4.0, 4.0);
        let both = spec(
            2,
            vec![vec![3.0, 0.0], vec![0.0, 7.0]],
            pot.clone(),
            Boundary::Natural,
            dom,
        );
        let space = FemSpace::build(&both.domain, 0.5, both.bc).unwrap();
        let gs = dense_ground_state(&both, &space).unwrap();
        for (j, k) in [(0, 3.0), (1, 7.0)] {
            let single = spec(1, vec![vec![k]], pot.clone(), Boundary::Natural, dom);
            let one = dense_ground_state(&single, &space).unwrap();
            let diff = (gs.phi.column(j) - one.phi.column(0)).amax();
            assert!(diff < 1e-10, "component {j}: {diff:e}");
        }
    }
}
