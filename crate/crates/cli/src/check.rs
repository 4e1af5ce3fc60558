//! Fast self-check against the dense oracles on small problems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multibec::fem::{Boundary, Interval};
use multibec::manifold::{feasibility_error, retract, Metric, MetricKind};
use multibec::model::{InteractionMatrix, PotentialSpec, ProblemSpec};
use multibec::operators::{Discretization, Frame};
use multibec::optim::{initialize, run, Method, SolverOptions};
use multibec::oracles::{
    dense_ground_state, dense_quadrature_energy, fd_gradient_check, local_rate_oracle,
    random_tangent, OVERSAMPLE,
};
use multibec::Result;

/// Outcome of one property.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_problem() -> ProblemSpec {
    ProblemSpec {
        domain: vec![Interval::new(-8.0, 8.0)],
        masses: vec![1.0, 1.25],
        kappa: InteractionMatrix::new(vec![vec![10.0, 4.0], vec![4.0, 8.0]]).expect("symmetric"),
        potentials: vec![PotentialSpec::harmonic(1.0); 2],
        bc: Boundary::Natural,
    }
}

fn random_frame(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Frame {
    use rand::Rng;
    Frame::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
}

fn geometry(disc: &Discretization, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let phi = retract(
            disc.mass(),
            &random_frame(disc.n(), disc.p(), rng),
            disc.masses(),
        )?;
        worst = worst.max(feasibility_error(disc.mass(), &phi, disc.masses()));
        let ham = disc.hamiltonian(&phi);
        let sigma = ham.rayleigh(disc, &phi);
        let metric = Metric::new(disc, &ham, &sigma, MetricKind::EnergyAdaptive)?;
        let u = random_frame(disc.n(), disc.p(), rng);
        let (pu, _) = metric.project(&phi, &u, 1e-14)?;
        let (ppu, _) = metric.project(&phi, &pu, 1e-14)?;
        worst = worst.max(disc.m_norm(&(&ppu - &pu)) / disc.m_norm(&pu));
    }
    Ok(CheckResult {
        name: "retraction and projection",
        passed: worst <= 1e-10,
        detail: format!("worst defect {worst:.1e}"),
    })
}

fn energy(spec: &ProblemSpec, disc: &Discretization, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let phi = random_frame(disc.n(), disc.p(), rng);
        let e = disc.energy(&phi);
        let oracle = dense_quadrature_energy(spec, disc.space(), &phi, OVERSAMPLE)?;
        worst = worst.max((e - oracle).abs() / oracle.abs());
    }
    Ok(CheckResult {
        name: "energy vs dense quadrature",
        passed: worst <= 1e-11,
        detail: format!("relative deviation {worst:.1e}"),
    })
}

fn gradients(
    spec: &ProblemSpec,
    disc: &Discretization,
    rng: &mut ChaCha8Rng,
) -> Result<CheckResult> {
    let phi = retract(
        disc.mass(),
        &random_frame(disc.n(), disc.p(), rng).abs(),
        disc.masses(),
    )?;
    let (mut err, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for kind in [MetricKind::L2, MetricKind::EnergyAdaptive] {
        let c = fd_gradient_check(spec, disc, &phi, kind, 10, 7)?;
        err = err.max(c.worst_rel_error);
        lo = lo.min(c.min_order);
        hi = hi.max(c.max_order);
    }
    Ok(CheckResult {
        name: "gradient vs finite differences",
        passed: err <= 1e-6 && lo >= 1.8 && hi <= 2.2,
        detail: format!("relative error {err:.1e}, order [{lo:.2}, {hi:.2}]"),
    })
}

fn ground_state(
    spec: &ProblemSpec,
    disc: &Discretization,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CheckResult>> {
    let gs = dense_ground_state(spec, disc.space())?;
    let opts = SolverOptions {
        tol: 1e-12,
        ..SolverOptions::new(Method::EaRgd)
    };
    let init = initialize(disc, &opts)?;
    let rep = run(disc, init.state, &opts)?;
    let mut phi = rep.state.clone();
    for j in 0..phi.ncols() {
        if phi.column(j).dot(&gs.phi.column(j)) < 0.0 {
            phi.column_mut(j).neg_mut();
        }
    }
    let dist = disc.m_norm(&(&phi - &gs.phi));

    let tau = 0.5;
    let est = local_rate_oracle(spec, disc.space(), &gs.phi, tau)?;
    let start = retract(
        disc.mass(),
        &(&gs.phi + random_tangent(disc, &gs.phi, rng) * 1e-2),
        disc.masses(),
    )?;
    let opts = SolverOptions {
        tau,
        alternating: false,
        tol: 1e-11,
        ..SolverOptions::new(Method::EaRgd)
    };
    let rates = run(disc, start, &opts)?;
    let res: Vec<f64> = rates
        .records
        .iter()
        .map(|r| r.residual)
        .filter(|&r| r > 1e-10)
        .collect();
    let k = res.len().min(30);
    let observed = if k >= 2 {
        (res[res.len() - 1] / res[res.len() - k]).powf(1.0 / (k - 1) as f64)
    } else {
        f64::NAN
    };
    let rel = (observed - est.rho).abs() / est.rho;
    Ok(vec![
        CheckResult {
            name: "ground state vs dense SCF",
            passed: rep.termination.converged() && dist <= 1e-8,
            detail: format!("M-norm distance {dist:.1e}"),
        },
        CheckResult {
            name: "local rate vs linearization",
            passed: rel <= 0.05,
            detail: format!("predicted {:.4}, observed {observed:.4}", est.rho),
        },
    ])
}

/// Runs every property; oracle refusals count as failures.
pub fn run_checks() -> Vec<CheckResult> {
    let spec = small_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let disc = match Discretization::new(&spec, 0.5) {
        Ok(d) => d,
        Err(e) => {
            return vec![CheckResult {
                name: "discretization",
                passed: false,
                detail: e.to_string(),
            }]
        }
    };
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<Vec<CheckResult>>| match r {
        Ok(rs) => out.extend(rs),
        Err(e) => out.push(CheckResult {
            name,
            passed: false,
            detail: e.to_string(),
        }),
    };
    push(
        "retraction and projection",
        geometry(&disc, &mut rng).map(|r| vec![r]),
    );
    push(
        "energy vs dense quadrature",
        energy(&spec, &disc, &mut rng).map(|r| vec![r]),
    );
    push(
        "gradient vs finite differences",
        gradients(&spec, &disc, &mut rng).map(|r| vec![r]),
    );
    push(
        "ground state vs dense SCF",
        ground_state(&spec, &disc, &mut rng),
    );
    out
}
