//! The continuous model: domain, masses, interaction matrix and external
//! potentials, together with the checks of the standing assumptions
//! (nonnegative potentials, symmetric positive definite interactions).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{interpolate_at_quadrature, Boundary, FemSpace, Interval};

/// Symmetric interaction matrix `K = [κ_ij]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct InteractionMatrix {
    p: usize,
    entries: Vec<f64>,
}

impl InteractionMatrix {
    /// Builds `K` from its rows; the matrix must be square and exactly symmetric.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::Config("interaction matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(p * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Config(format!(
                    "interaction matrix row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "interaction matrix has non-finite entries".into(),
            ));
        }
        for i in 0..p {
            for j in 0..i {
                if entries[i * p + j] != entries[j * p + i] {
                    return Err(Error::Config(format!(
                        "interaction matrix is not symmetric: κ[{i}][{j}] = {} but κ[{j}][{i}] = {}",
                        entries[i * p + j],
                        entries[j * p + i]
                    )));
                }
            }
        }
        Ok(Self { p, entries })
    }

    pub fn identity(p: usize) -> Self {
        let mut entries = vec![0.0; p * p];
        for i in 0..p {
            entries[i * p + i] = 1.0;
        }
        Self { p, entries }
    }

    /// Two-component benchmark interactions `β·[[2.08, 2], [2, 1.94]]`.
    pub fn benchmark_two_component(beta: f64) -> Self {
        Self::new(vec![
            vec![2.08 * beta, 2.0 * beta],
            vec![2.0 * beta, 1.94 * beta],
        ])
        .expect("symmetric by construction")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.p + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.p).map(<[f64]>::to_vec).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.to_dense()).eigenvalues.min()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    pub fn nonnegative_entries(&self) -> bool {
        self.entries.iter().all(|&k| k >= 0.0)
    }

    /// `κ₁₁κ₂₂/κ₁₂² − 1`, defined for two components with `κ₁₂ ≠ 0`.
    pub fn miscibility(&self) -> Option<f64> {
        let k12 = self.get(0, 1.min(self.p - 1));
        (self.p == 2 && k12 != 0.0).then(|| self.get(0, 0) * self.get(1, 1) / (k12 * k12) - 1.0)
    }
}

impl TryFrom<Vec<Vec<f64>>> for InteractionMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<InteractionMatrix> for Vec<Vec<f64>> {
    fn from(k: InteractionMatrix) -> Self {
        k.rows()
    }
}

/// Confining wall `strength · max_d (2(x_d − a_d)/(b_d − a_d) − 1)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trap {
    pub strength: f64,
    pub exponent: u32,
}

/// Shape of one external potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// `prefactor · (½·harmonic·|x − center|² + lattice_depth · Σ_d cos²(k·x_d))`.
    Expression {
        #[serde(default = "one")]
        prefactor: f64,
        #[serde(default)]
        harmonic: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        lattice_depth: f64,
        #[serde(default = "one")]
        lattice_wavenumber: f64,
    },
    /// Alternating `0 / value` on square cells of side `cell`.
    Checkerboard {
        cell: f64,
        value: f64,
    },
    /// Independent `Bernoulli(probability)` choice of `value` (else 0) per cell.
    PiecewiseRandom {
        cell: f64,
        value: f64,
        #[serde(default = "half")]
        probability: f64,
        seed: u64,
    },
    /// Nodal values read from a text file in mesh node order.
    NodalFile {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

/// External potential of one component, optionally with an additive trap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub shape: Potential,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<Trap>,
}

impl PotentialSpec {
    pub fn new(shape: Potential) -> Self {
        Self { shape, trap: None }
    }

    pub fn with_trap(mut self, trap: Trap) -> Self {
        self.trap = Some(trap);
        self
    }

    /// `2(½x² + 24cos²x)`, the optical-lattice potential of the 1D benchmark.
    pub fn harmonic_lattice_benchmark() -> Self {
        Self::new(Potential::Expression {
            prefactor: 2.0,
            harmonic: 1.0,
            center: Vec::new(),
            lattice_depth: 24.0,
            lattice_wavenumber: 1.0,
        })
    }

    pub fn harmonic(strength: f64) -> Self {
        Self::new(Potential::Expression {
            prefactor: 1.0,
            harmonic: strength,
            center: Vec::new(),
            lattice_depth: 0.0,
            lattice_wavenumber: 1.0,
        })
    }
}

/// The continuous multicomponent problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: Vec<Interval>,
    /// Particle numbers `N_j`.
    pub masses: Vec<f64>,
    pub kappa: InteractionMatrix,
    pub potentials: Vec<PotentialSpec>,
    pub bc: Boundary,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn components(&self) -> usize {
        self.masses.len()
    }

    /// Two-component 1D benchmark on `[−16, 16]` with masses `(α, 1 − α)`.
    pub fn bench1d(beta: f64, alpha: f64) -> Self {
        Self {
            domain: vec![Interval::new(-16.0, 16.0)],
            masses: vec![alpha, 1.0 - alpha],
            kappa: InteractionMatrix::benchmark_two_component(beta),
            potentials: vec![PotentialSpec::harmonic_lattice_benchmark(); 2],
            bc: Boundary::Natural,
        }
    }

    /// Three-component problem on the unit square with a `{0, 2¹²}` potential
    /// on cells of side `2⁻⁶` and the high-order confining wall.
    pub fn bench2d(random_seed: Option<u64>) -> Self {
        let cell = 2f64.powi(-6);
        let value = 2f64.powi(12);
        let shape = match random_seed {
            Some(seed) => Potential::PiecewiseRandom {
                cell,
                value,
                probability: 0.5,
                seed,
            },
            None => Potential::Checkerboard { cell, value },
        };
        let pot = PotentialSpec::new(shape).with_trap(Trap {
            strength: 1e6,
            exponent: 40,
        });
        let kappa = InteractionMatrix::new(vec![
            vec![0.5, 1.0, 1.0],
            vec![1.0, 5.0, 1.0],
            vec![1.0, 1.0, 10.0],
        ])
        .expect("symmetric");
        Self {
            domain: vec![Interval::new(0.0, 1.0); 2],
            masses: vec![1.0; 3],
            kappa,
            potentials: vec![pot; 3],
            bc: Boundary::Natural,
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub nonneg_kappa: bool,
    /// Only reported for two components with nonzero cross interaction.
    pub miscibility: Option<f64>,
    pub min_kappa_eigenvalue: f64,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// Refuses problems that violate the standing assumptions.
    pub fn require_assumptions(&self) -> Result<()> {
        if !self.a1_ok {
            return Err(Error::Assumption(
                "external potentials must be nonnegative".into(),
            ));
        }
        if !self.a2_ok {
            return Err(Error::Assumption(format!(
                "interaction matrix must be positive definite (smallest eigenvalue {:e})",
                self.min_kappa_eigenvalue
            )));
        }
        Ok(())
    }
}

fn check_potential(j: usize, pot: &PotentialSpec, dim: usize) -> Result<()> {
    let negative = |what: &str| {
        Err(Error::Assumption(format!(
            "potential {j}: {what} makes the potential negative"
        )))
    };
    match &pot.shape {
        Potential::Zero => {}
        Potential::Expression {
            prefactor,
            harmonic,
            center,
            lattice_depth,
            ..
        } => {
            if !center.is_empty() && center.len() != dim {
                return Err(Error::Config(format!(
                    "potential {j}: center has {} coordinates, expected {dim}",
                    center.len()
                )));
            }
            if *prefactor < 0.0 {
                return negative("negative prefactor");
            }
            if *harmonic < 0.0 {
                return negative("negative harmonic coefficient");
            }
            if *lattice_depth < 0.0 {
                return negative("negative lattice depth");
            }
        }
        Potential::Checkerboard { cell, value }
        | Potential::PiecewiseRandom { cell, value, .. } => {
            if !(*cell > 0.0) {
                return Err(Error::Config(format!(
                    "potential {j}: cell size must be positive"
                )));
            }
            if *value < 0.0 {
                return negative("negative cell value");
            }
            if let Potential::PiecewiseRandom { probability, .. } = &pot.shape {
                if !(0.0..=1.0).contains(probability) {
                    return Err(Error::Config(format!(
                        "potential {j}: probability {probability} outside [0, 1]"
                    )));
                }
            }
        }
        Potential::NodalFile { path } => {
            let values = read_potential_file(path, None)?;
            if let Some(v) = values.iter().find(|v| **v < 0.0) {
                return negative(&format!("file value {v}"));
            }
        }
    }
    if let Some(trap) = &pot.trap {
        if trap.strength < 0.0 {
            return negative("negative trap strength");
        }
        if trap.exponent % 2 != 0 {
            return negative("odd trap exponent");
        }
    }
    Ok(())
}

/// Checks well-formedness and the standing assumptions.
///
/// Structural defects (asymmetric or mis-sized `K`, nonpositive masses,
/// potentials that are negative somewhere) are errors. Positive
/// definiteness of `K` is reported in `a2_ok`; solvers call
/// [`ValidationReport::require_assumptions`] before running.
pub fn validate(spec: &ProblemSpec) -> Result<ValidationReport> {
    let p = spec.components();
    let dim = spec.dim();
    if p == 0 {
        return Err(Error::Config("at least one component is required".into()));
    }
    if !(1..=2).contains(&dim) {
        return Err(Error::Config(format!(
            "dimension must be 1 or 2, got {dim}"
        )));
    }
    if spec.kappa.p() != p {
        return Err(Error::Config(format!(
            "interaction matrix is {0}x{0} but there are {p} masses",
            spec.kappa.p()
        )));
    }
    if spec.potentials.len() != p {
        return Err(Error::Config(format!(
            "{} potentials given for {p} components",
            spec.potentials.len()
        )));
    }
    for (j, &n) in spec.masses.iter().enumerate() {
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Config(format!(
                "mass N_{j} must be positive, got {n}"
            )));
        }
    }
    // Re-check symmetry in case the matrix was mutated through serde.
    for i in 0..p {
        for j in 0..i {
            if spec.kappa.get(i, j) != spec.kappa.get(j, i) {
                return Err(Error::Config("interaction matrix is not symmetric".into()));
            }
        }
    }
    for (j, pot) in spec.potentials.iter().enumerate() {
        check_potential(j, pot, dim)?;
    }
    let min_eig = spec.kappa.min_eigenvalue();
    let miscibility = spec.kappa.miscibility();
    let mut warnings = Vec::new();
    if let Some(d) = miscibility {
        if d <= 0.0 {
            warnings.push(format!(
                "miscibility indicator {d:.4} <= 0: components are expected to separate"
            ));
        }
    }
    Ok(ValidationReport {
        a1_ok: true,
        a2_ok: min_eig > 0.0,
        nonneg_kappa: spec.kappa.nonnegative_entries(),
        miscibility,
        min_kappa_eigenvalue: min_eig,
        warnings,
    })
}

/// A potential sampled on a finite element space.
#[derive(Debug, Clone)]
pub struct PotentialField {
    /// Values at the mesh nodes, in node order.
    pub nodal: Vec<f64>,
    /// Values at all quadrature points, element-major.
    pub quadrature: Vec<f64>,
}

fn cells_per_axis(space: &FemSpace, cell: f64) -> Result<Vec<usize>> {
    space
        .domain()
        .iter()
        .map(|iv| {
            let m = iv.length() / cell;
            let r = m.round();
            if r < 1.0 || (m - r).abs() > 1e-9 * m.max(1.0) {
                Err(Error::Config(format!(
                    "cell size {cell} does not divide the domain length {}",
                    iv.length()
                )))
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}

fn cell_index(space: &FemSpace, cell: f64, counts: &[usize], x: &[f64]) -> usize {
    let mut index = 0;
    let mut stride = 1;
    for (d, iv) in space.domain().iter().enumerate() {
        let c = (((x[d] - iv.lo) / cell).floor().max(0.0) as usize).min(counts[d] - 1);
        index += c * stride;
        stride *= counts[d];
    }
    index
}

fn trap_value(space: &FemSpace, trap: &Trap, x: &[f64]) -> f64 {
    let wall = space
        .domain()
        .iter()
        .enumerate()
        .map(|(d, iv)| (2.0 * (x[d] - iv.lo) / iv.length() - 1.0).powi(trap.exponent as i32))
        .fold(f64::NEG_INFINITY, f64::max);
    trap.strength * wall
}

/// Pointwise evaluator of the shape part of a potential (without the trap);
/// `None` for nodal files, which only exist on their mesh.
fn shape_function(
    pot: &PotentialSpec,
    space: &FemSpace,
) -> Result<Option<Box<dyn Fn(&[f64]) -> f64>>> {
    let d = space.dim();
    let base: Box<dyn Fn(&[f64]) -> f64> = match &pot.shape {
        Potential::Zero => Box::new(|_| 0.0),
        Potential::Expression {
            prefactor,
            harmonic,
            center,
            lattice_depth,
            lattice_wavenumber,
        } => {
            let (pf, hm, depth, k) = (*prefactor, *harmonic, *lattice_depth, *lattice_wavenumber);
            let center = if center.is_empty() {
                vec![0.0; d]
            } else {
                center.clone()
            };
            Box::new(move |x: &[f64]| {
                let mut r2 = 0.0;
                let mut lattice = 0.0;
                for (xi, ci) in x.iter().zip(&center) {
                    r2 += (xi - ci) * (xi - ci);
                    lattice += (k * xi).cos().powi(2);
                }
                pf * (0.5 * hm * r2 + depth * lattice)
            })
        }
        Potential::Checkerboard { cell, value } => {
            let counts = cells_per_axis(space, *cell)?;
            let (cell, value) = (*cell, *value);
            let sp = space.clone();
            Box::new(move |x: &[f64]| {
                let parity: usize = sp
                    .domain()
                    .iter()
                    .enumerate()
                    .map(|(a, iv)| {
                        (((x[a] - iv.lo) / cell).floor().max(0.0) as usize).min(counts[a] - 1)
                    })
                    .sum();
                if parity % 2 == 1 {
                    value
                } else {
                    0.0
                }
            })
        }
        Potential::PiecewiseRandom {
            cell,
            value,
            probability,
            seed,
        } => {
            let counts = cells_per_axis(space, *cell)?;
            let total: usize = counts.iter().product();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let table: Vec<f64> = (0..total)
                .map(|_| {
                    if rng.random_bool(*probability) {
                        *value
                    } else {
                        0.0
                    }
                })
                .collect();
            let cell = *cell;
            let sp = space.clone();
            Box::new(move |x: &[f64]| table[cell_index(&sp, cell, &counts, x)])
        }
        Potential::NodalFile { .. } => return Ok(None),
    };
    Ok(Some(base))
}

/// Pointwise evaluator of a potential including its trap.
pub fn point_potential(
    pot: &PotentialSpec,
    space: &FemSpace,
) -> Result<Option<Box<dyn Fn(&[f64]) -> f64>>> {
    let Some(base) = shape_function(pot, space)? else {
        return Ok(None);
    };
    let trap = pot.trap;
    let sp = space.clone();
    Ok(Some(Box::new(move |x: &[f64]| {
        base(x) + trap.as_ref().map_or(0.0, |t| trap_value(&sp, t, x))
    })))
}

/// Samples the potentials of all components on `space`.
///
/// Random potentials draw their cell values from a ChaCha8 stream seeded
/// with the configured seed, in lexicographic cell order.
pub fn evaluate_potentials(spec: &ProblemSpec, space: &FemSpace) -> Result<Vec<PotentialField>> {
    let d = space.dim();
    let mut fields = Vec::with_capacity(spec.potentials.len());
    for (j, pot) in spec.potentials.iter().enumerate() {
        let Some(base) = shape_function(pot, space)? else {
            let Potential::NodalFile { path } = &pot.shape else {
                unreachable!("only nodal files lack a point evaluator")
            };
            let nodal = read_potential_file(path, Some(space.n_nodes()))?;
            let quadrature = interpolate_at_quadrature(space, &nodal);
            fields.push(with_trap(
                space,
                pot,
                j,
                PotentialField { nodal, quadrature },
            )?);
            continue;
        };
        let nodal = (0..space.n_nodes())
            .map(|i| base(&space.node_coords(i)[..d]))
            .collect();
        let r = space.reference();
        let mut quadrature = Vec::with_capacity(space.n_elements() * r.quad_points());
        for e in 0..space.n_elements() {
            for q in 0..r.quad_points() {
                quadrature.push(base(&space.quad_point(e, q)[..d]));
            }
        }
        fields.push(with_trap(
            space,
            pot,
            j,
            PotentialField { nodal, quadrature },
        )?);
    }
    Ok(fields)
}

fn with_trap(
    space: &FemSpace,
    pot: &PotentialSpec,
    j: usize,
    mut field: PotentialField,
) -> Result<PotentialField> {
    let d = space.dim();
    if let Some(trap) = &pot.trap {
        for (i, v) in field.nodal.iter_mut().enumerate() {
            *v += trap_value(space, trap, &space.node_coords(i)[..d]);
        }
        let nq = space.reference().quad_points();
        for (k, v) in field.quadrature.iter_mut().enumerate() {
            *v += trap_value(space, trap, &space.quad_point(k / nq, k % nq)[..d]);
        }
    }
    if let Some(v) = field.quadrature.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Assumption(format!(
            "potential {j} takes the value {v} at a quadrature point"
        )));
    }
    Ok(field)
}

/// Reads a nodal potential: `#`-prefixed header lines (one of which carries
/// `n=<count>`), then one value per line.
pub fn read_potential_file(path: &Path, expected: Option<usize>) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut declared = None;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(header) = line.strip_prefix('#') {
            for token in header.split_whitespace() {
                if let Some(n) = token.strip_prefix("n=") {
                    declared = Some(n.parse::<usize>().map_err(|_| {
                        Error::Config(format!("{}: bad header token {token}", path.display()))
                    })?);
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| {
            Error::Config(format!(
                "{}:{}: not a number: {line}",
                path.display(),
                lineno + 1
            ))
        })?);
    }
    let declared = declared.ok_or_else(|| {
        Error::Config(format!("{}: missing `# n=<count>` header", path.display()))
    })?;
    if values.len() != declared {
        return Err(Error::Shape {
            what: "potential file body vs header",
            expected: declared,
            got: values.len(),
        });
    }
    if let Some(n) = expected {
        if n != declared {
            return Err(Error::Shape {
                what: "potential file node count",
                expected: n,
                got: declared,
            });
        }
    }
    Ok(values)
}

pub fn write_potential_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 24);
    let _ = writeln!(out, "# n={}", values.len());
    for v in values {
        let _ = writeln!(out, "{v:e}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space_1d(h: f64) -> FemSpace {
        FemSpace::build(&[Interval::new(-16.0, 16.0)], h, Boundary::Natural).unwrap()
    }

    #[test]
    fn benchmark_interactions_are_miscible() {
        let k = InteractionMatrix::benchmark_two_component(10.0);
        let spec = ProblemSpec {
            kappa: k,
            ..ProblemSpec::bench1d(10.0, 0.8)
        };
        let report = validate(&spec).unwrap();
        assert!(report.a2_ok && report.nonneg_kappa);
        let d = report.miscibility.unwrap();
        assert!((d - (2.08 * 1.94 / 4.0 - 1.0)).abs() < 1e-15);
        assert!((d - 0.0088).abs() < 1e-12);
        assert!(report.warnings.is_empty());
        report.require_assumptions().unwrap();
    }

    #[test]
    fn identity_interactions() {
        let k = InteractionMatrix::identity(3);
        assert!(k.is_positive_definite());
        assert!(k.nonnegative_entries());
        assert_eq!(k.miscibility(), None);
    }

    #[test]
    fn indefinite_interactions_fail_a2() {
        let mut spec = ProblemSpec::bench1d(1.0, 0.5);
        spec.kappa = InteractionMatrix::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let report = validate(&spec).unwrap();
        assert!(!report.a2_ok);
        assert!((report.min_kappa_eigenvalue + 1.0).abs() < 1e-12);
        assert!(matches!(
            report.require_assumptions(),
            Err(Error::Assumption(_))
        ));
        // Δ = 1·1/4 − 1 < 0 triggers the immiscibility warning.
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn structural_errors() {
        assert!(InteractionMatrix::new(vec![vec![1.0, 2.0], vec![2.5, 1.0]]).is_err());
        let mut spec = ProblemSpec::bench1d(1.0, 0.5);
        spec.masses[1] = 0.0;
        assert!(matches!(validate(&spec), Err(Error::Config(_))));
        let mut spec = ProblemSpec::bench1d(1.0, 0.5);
        spec.potentials[0] = PotentialSpec::harmonic(-1.0);
        assert!(matches!(validate(&spec), Err(Error::Assumption(_))));
    }

    #[test]
    fn lattice_potential_at_origin() {
        let s = space_1d(1.0);
        let mut spec = ProblemSpec::bench1d(10.0, 0.8);
        spec.potentials.truncate(1);
        spec.masses.truncate(1);
        spec.kappa = InteractionMatrix::identity(1);
        let f = evaluate_potentials(&spec, &s).unwrap();
        let origin = (0..s.n_nodes())
            .find(|&i| s.node_coords(i)[0] == 0.0)
            .unwrap();
        assert_eq!(f[0].nodal[origin], 48.0);
    }

    #[test]
    fn trap_vanishes_at_center() {
        let iv = Interval::new(0.0, 1.0);
        let s = FemSpace::build(&[iv, iv], 0.25, Boundary::Natural).unwrap();
        let spec = ProblemSpec::bench2d(None);
        let f = evaluate_potentials(&spec, &s).unwrap();
        let center = (0..s.n_nodes())
            .find(|&i| s.node_coords(i) == [0.5, 0.5])
            .unwrap();
        let trap = Trap {
            strength: 1e6,
            exponent: 40,
        };
        assert_eq!(trap_value(&s, &trap, &[0.5, 0.5]), 0.0);
        assert!(trap_value(&s, &trap, &[0.0, 0.5]) == 1e6);
        assert!(f[0].nodal[center] == 0.0 || f[0].nodal[center] == 4096.0);
    }

    #[test]
    fn random_potential_is_deterministic_and_two_valued() {
        let iv = Interval::new(0.0, 1.0);
        let s = FemSpace::build(&[iv, iv], 2f64.powi(-7), Boundary::Natural).unwrap();
        let mut spec = ProblemSpec::bench2d(Some(42));
        for p in spec.potentials.iter_mut() {
            p.trap = None;
        }
        let a = evaluate_potentials(&spec, &s).unwrap();
        let b = evaluate_potentials(&spec, &s).unwrap();
        assert_eq!(a[0].quadrature, b[0].quadrature);
        assert!(a[0].quadrature.iter().all(|&v| v == 0.0 || v == 4096.0));
        let high = a[0].quadrature.iter().filter(|&&v| v > 0.0).count() as f64;
        let frac = high / a[0].quadrature.len() as f64;
        assert!((0.3..0.7).contains(&frac));
        // Elements are nested inside cells, so the potential is elementwise constant.
        let nq = s.reference().quad_points();
        for e in 0..s.n_elements() {
            let vals = &a[0].quadrature[e * nq..(e + 1) * nq];
            assert!(vals.iter().all(|&v| v == vals[0]));
        }
        spec.potentials[0].shape = Potential::PiecewiseRandom {
            cell: 2f64.powi(-6),
            value: 4096.0,
            probability: 0.5,
            seed: 43,
        };
        let c = evaluate_potentials(&spec, &s).unwrap();
        assert_ne!(a[0].quadrature, c[0].quadrature);
    }

    #[test]
    fn potential_file_roundtrip_and_length_check() {
        let dir = std::env::temp_dir().join(format!("multibec-pot-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.txt");
        let s = FemSpace::build(&[Interval::new(0.0, 1.0)], 0.25, Boundary::Natural).unwrap();
        let values: Vec<f64> = (0..s.n_nodes()).map(|i| i as f64 * 0.5).collect();
        write_potential_file(&path, &values).unwrap();
        assert_eq!(read_potential_file(&path, Some(9)).unwrap(), values);
        assert!(matches!(
            read_potential_file(&path, Some(10)),
            Err(Error::Shape { .. })
        ));
        let spec = ProblemSpec {
            domain: vec![Interval::new(0.0, 1.0)],
            masses: vec![1.0],
            kappa: InteractionMatrix::identity(1),
            potentials: vec![PotentialSpec::new(Potential::NodalFile {
                path: path.clone(),
            })],
            bc: Boundary::Natural,
        };
        validate(&spec).unwrap();
        let f = evaluate_potentials(&spec, &s).unwrap();
        assert_eq!(f[0].nodal, values);
        let coarse = FemSpace::build(&[Interval::new(0.0, 1.0)], 0.5, Boundary::Natural).unwrap();
        assert!(evaluate_potentials(&spec, &coarse).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
