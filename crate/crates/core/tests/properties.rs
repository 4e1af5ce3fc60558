use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multibec::fem::{Boundary, Interval};
use multibec::manifold::{feasibility_error, retract, tangency_error, Metric, MetricKind};
use multibec::model::{InteractionMatrix, PotentialSpec, ProblemSpec};
use multibec::operators::{Discretization, Frame};
use multibec::optim::{stop_check, InnerTolerance, Method, StopDecision};
use multibec::oracles::random_tangent;

fn spec(p: usize, bc: Boundary) -> ProblemSpec {
    let rows = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| if i == j { 4.0 + i as f64 } else { 1.0 })
                .collect()
        })
        .collect();
    ProblemSpec {
        domain: vec![Interval::new(-4.0, 4.0)],
        masses: (0..p).map(|j| 0.5 + j as f64).collect(),
        kappa: InteractionMatrix::new(rows).unwrap(),
        potentials: vec![PotentialSpec::harmonic(1.0); p],
        bc,
    }
}

fn frame(disc: &Discretization, seed: u64, scale: f64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Frame::from_fn(disc.n(), disc.p(), |_, _| {
        scale * rng.random_range(-1.0..1.0)
    })
}

fn bc() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Natural), Just(Boundary::Dirichlet)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retraction_lands_on_the_manifold(p in 1usize..=3, seed in any::<u64>(), scale in 1e-3f64..1e3, bc in bc()) {
        let disc = Discretization::new(&spec(p, bc), 0.5).unwrap();
        let phi = retract(disc.mass(), &frame(&disc, seed, scale), disc.masses()).unwrap();
        prop_assert!(feasibility_error(disc.mass(), &phi, disc.masses()) <= 1e-12);
        let again = retract(disc.mass(), &phi, disc.masses()).unwrap();
        prop_assert!((&again - &phi).abs().max() <= 1e-13);
    }

    #[test]
    fn projections_are_tangent_and_idempotent(p in 1usize..=3, seed in any::<u64>(), kind in 0usize..2) {
        let disc = Discretization::new(&spec(p, Boundary::Natural), 0.5).unwrap();
        let phi = retract(disc.mass(), &frame(&disc, seed, 1.0), disc.masses()).unwrap();
        let ham = disc.hamiltonian(&phi);
        let sigma = ham.rayleigh(&disc, &phi);
        let kind = [MetricKind::L2, MetricKind::EnergyAdaptive][kind];
        let metric = Metric::new(&disc, &ham, &sigma, kind).unwrap();
        let u = frame(&disc, seed ^ 1, 1.0);
        let (pu, _) = metric.project(&phi, &u, 1e-14).unwrap();
        let (ppu, _) = metric.project(&phi, &pu, 1e-14).unwrap();
        let scale = disc.m_norm(&pu);
        prop_assert!(tangency_error(disc.mass(), &phi, &pu) <= 1e-10 * scale.max(1.0));
        prop_assert!(disc.m_norm(&(&ppu - &pu)) <= 1e-10 * scale);
    }

    #[test]
    fn metrics_are_symmetric(p in 1usize..=3, seed in any::<u64>()) {
        let disc = Discretization::new(&spec(p, Boundary::Natural), 0.5).unwrap();
        let phi = retract(disc.mass(), &frame(&disc, seed, 1.0), disc.masses()).unwrap();
        let ham = disc.hamiltonian(&phi);
        let sigma = ham.rayleigh(&disc, &phi);
        let metric = Metric::new(&disc, &ham, &sigma, MetricKind::EnergyAdaptive).unwrap();
        let z = frame(&disc, seed ^ 2, 1.0);
        let y = frame(&disc, seed ^ 3, 1.0);
        let (a, b) = (metric.inner(&z, &y), metric.inner(&y, &z));
        let bound = metric.apply(&z).norm() * y.norm();
        prop_assert!((a - b).abs() <= 1e-12 * bound);
    }

    #[test]
    fn energy_ignores_component_signs(p in 1usize..=3, seed in any::<u64>(), flip in 0usize..3) {
        let disc = Discretization::new(&spec(p, Boundary::Natural), 0.5).unwrap();
        let phi = frame(&disc, seed, 1.0);
        let mut flipped = phi.clone();
        flipped.column_mut(flip % p).neg_mut();
        let (e, f) = (disc.energy(&phi), disc.energy(&flipped));
        prop_assert!((e - f).abs() <= 1e-13 * e.abs());
    }

    #[test]
    fn energy_is_positive(p in 1usize..=3, seed in any::<u64>()) {
        let disc = Discretization::new(&spec(p, Boundary::Dirichlet), 0.5).unwrap();
        prop_assert!(disc.energy(&frame(&disc, seed, 1.0)) > 0.0);
    }

    #[test]
    fn random_tangents_are_unit_and_tangent(p in 1usize..=3, seed in any::<u64>()) {
        let disc = Discretization::new(&spec(p, Boundary::Natural), 0.5).unwrap();
        let phi = retract(disc.mass(), &frame(&disc, seed, 1.0), disc.masses()).unwrap();
        let z = random_tangent(&disc, &phi, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        prop_assert!((disc.m_norm(&z) - 1.0).abs() <= 1e-12);
        prop_assert!(tangency_error(disc.mass(), &phi, &z) <= 1e-12);
    }

    #[test]
    fn inner_tolerance_stays_in_the_clamp(res in 0.0f64..1e6, dim in 1usize..=2) {
        let t = InnerTolerance::default().tolerance(dim, res);
        prop_assert!((1e-14..=1e-1).contains(&t));
    }

    #[test]
    fn asymmetric_interactions_are_rejected(a in 0.1f64..10.0, eps in 1e-9f64..1.0) {
        prop_assert!(InteractionMatrix::new(vec![vec![a, 1.0], vec![1.0 + eps, a]]).is_err());
    }
}

#[test]
fn stopping_rule() {
    assert_eq!(stop_check(1e-9, 1e-8), StopDecision::Converged);
    assert_eq!(stop_check(1e-8, 1e-8), StopDecision::Continue);
    assert_eq!(stop_check(f64::NAN, 1e-8), StopDecision::Abort);
    assert_eq!(stop_check(f64::INFINITY, 1e-8), StopDecision::Abort);
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("newton".parse::<Method>().is_err());
}
