use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::sparse::{Pattern, Restriction, SparseSymMatrix};
use crate::error::{Error, Result};

/// Nodes per axis of one quadratic element.
pub const NODES_1D: usize = 3;

/// Gauss–Legendre points per axis and element.
pub const QUAD_POINTS_1D: usize = 5;

/// Upper bound on the node count (indices are stored as `usize`, but every
/// downstream array must stay addressable with 32-bit offsets).
pub const MAX_NODES: usize = u32::MAX as usize;

// 5-point Gauss–Legendre rule on [-1, 1].
const GAUSS5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Homogeneous Neumann (natural) boundary conditions.
    #[default]
    Natural,
    /// Homogeneous Dirichlet conditions by elimination of boundary nodes.
    Dirichlet,
}

/// Closed interval `[lo, hi]` of one coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Quadratic Lagrange shape functions on the reference interval `[0, 1]`
/// with nodes at `0, 1/2, 1`.
#[inline]
pub(crate) fn shape_1d(t: f64) -> [f64; 3] {
    [
        2.0 * (t - 0.5) * (t - 1.0),
        -4.0 * t * (t - 1.0),
        2.0 * t * (t - 0.5),
    ]
}

#[inline]
pub(crate) fn shape_1d_deriv(t: f64) -> [f64; 3] {
    [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0]
}

/// Reference-element tables: shape values and reference gradients at the
/// tensor-product quadrature points.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub(crate) dim: usize,
    pub(crate) npe: usize,
    pub(crate) nq: usize,
    /// Quadrature points on `[0,1]^d`, `dim` coordinates per point.
    pub(crate) points: Vec<[f64; 2]>,
    /// Weights summing to one.
    pub(crate) weights: Vec<f64>,
    /// `values[q * npe + a]`.
    pub(crate) values: Vec<f64>,
    /// `grads[(q * npe + a) * 2 + d]`, derivative in reference coordinates.
    pub(crate) grads: Vec<f64>,
}

impl ReferenceElement {
    fn new(dim: usize) -> Self {
        let pts1: Vec<f64> = GAUSS5_X.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let w1: Vec<f64> = GAUSS5_W.iter().map(|w| 0.5 * w).collect();
        let npe = NODES_1D.pow(dim as u32);
        let nq = QUAD_POINTS_1D.pow(dim as u32);
        let mut points = Vec::with_capacity(nq);
        let mut weights = Vec::with_capacity(nq);
        let mut values = Vec::with_capacity(nq * npe);
        let mut grads = Vec::with_capacity(nq * npe * 2);
        match dim {
            1 => {
                for (qx, &x) in pts1.iter().enumerate() {
                    points.push([x, 0.0]);
                    weights.push(w1[qx]);
                    let (n, dn) = (shape_1d(x), shape_1d_deriv(x));
                    for a in 0..3 {
                        values.push(n[a]);
                        grads.extend_from_slice(&[dn[a], 0.0]);
                    }
                }
            }
            2 => {
                for (qy, &y) in pts1.iter().enumerate() {
                    for (qx, &x) in pts1.iter().enumerate() {
                        points.push([x, y]);
                        weights.push(w1[qx] * w1[qy]);
                        let (nx, dnx) = (shape_1d(x), shape_1d_deriv(x));
                        let (ny, dny) = (shape_1d(y), shape_1d_deriv(y));
                        for b in 0..3 {
                            for a in 0..3 {
                                values.push(nx[a] * ny[b]);
                                grads.extend_from_slice(&[dnx[a] * ny[b], nx[a] * dny[b]]);
                            }
                        }
                    }
                }
            }
            _ => unreachable!("dimension checked by FemSpace::build"),
        }
        Self {
            dim,
            npe,
            nq,
            points,
            weights,
            values,
            grads,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_element(&self) -> usize {
        self.npe
    }

    pub fn quad_points(&self) -> usize {
        self.nq
    }
}

/// Tensor-product mesh of an interval or rectangle with quadratic
/// (1D) or bi-quadratic (2D) Lagrange elements.
///
/// Nodes are numbered lexicographically with the first axis running
/// fastest. Under Dirichlet conditions the boundary nodes are eliminated and
/// the remaining *degrees of freedom* are the interior nodes in node order.
#[derive(Debug, Clone)]
pub struct FemSpace {
    dim: usize,
    domain: Vec<Interval>,
    h: f64,
    elems_per_axis: Vec<usize>,
    nodes_per_axis: Vec<usize>,
    n_nodes: usize,
    bc: Boundary,
    reference: ReferenceElement,
    /// `elements[e * npe + a]` is the global node of local node `a`.
    elements: Vec<usize>,
    pattern: Arc<Pattern>,
    /// `slots[(e * npe + a) * npe + b]` is the value index of `(node_a, node_b)`.
    slots: Vec<usize>,
    free: Vec<usize>,
    dof_of_node: Vec<usize>,
    restriction: Option<Restriction>,
}

impl FemSpace {
    /// Builds the mesh of `domain` (one interval per axis) with element
    /// width `h` on every axis.
    pub fn build(domain: &[Interval], h: f64, bc: Boundary) -> Result<Self> {
        let dim = domain.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!(
                "mesh width must be positive, got {h}"
            )));
        }
        let mut elems_per_axis = Vec::with_capacity(dim);
        for (d, iv) in domain.iter().enumerate() {
            let len = iv.length();
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::Config(format!(
                    "axis {d}: empty or invalid interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
            let m = len / h;
            if m > MAX_NODES as f64 {
                return Err(Error::Capacity(format!(
                    "axis {d}: {m:e} elements exceed the index range"
                )));
            }
            let rounded = m.round();
            if rounded < 1.0 || (m - rounded).abs() > 1e-12 * m.max(1.0) {
                return Err(Error::Config(format!(
                    "axis {d}: length {len} is not an integer multiple of h = {h}"
                )));
            }
            elems_per_axis.push(rounded as usize);
        }
        let nodes_per_axis: Vec<usize> = elems_per_axis.iter().map(|m| 2 * m + 1).collect();
        let n_nodes = nodes_per_axis
            .iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .filter(|&n| n <= MAX_NODES)
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "node count {} overflows the index type",
                    nodes_per_axis.iter().map(|&k| k as f64).product::<f64>()
                ))
            })?;
        let n_elems: usize = elems_per_axis.iter().product();
        let reference = ReferenceElement::new(dim);
        let npe = reference.npe;
        n_elems
            .checked_mul(npe * npe)
            .ok_or_else(|| Error::Capacity("element slot table overflows".into()))?;

        let mut elements = Vec::with_capacity(n_elems * npe);
        match dim {
            1 => {
                for e in 0..elems_per_axis[0] {
                    elements.extend_from_slice(&[2 * e, 2 * e + 1, 2 * e + 2]);
                }
            }
            _ => {
                let nx = nodes_per_axis[0];
                for ey in 0..elems_per_axis[1] {
                    for ex in 0..elems_per_axis[0] {
                        for b in 0..3 {
                            for a in 0..3 {
                                elements.push((2 * ey + b) * nx + 2 * ex + a);
                            }
                        }
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern::from_elements(n_nodes, elements.chunks(npe)));
        let mut slots = Vec::with_capacity(n_elems * npe * npe);
        for nodes in elements.chunks(npe) {
            for &a in nodes {
                for &b in nodes {
                    slots.push(pattern.find(a, b).expect("element pair in pattern"));
                }
            }
        }

        let mut space = Self {
            dim,
            domain: domain.to_vec(),
            h,
            elems_per_axis,
            nodes_per_axis,
            n_nodes,
            bc,
            reference,
            elements,
            pattern,
            slots,
            free: Vec::new(),
            dof_of_node: Vec::new(),
            restriction: None,
        };
        match bc {
            Boundary::Natural => {
                space.free = (0..n_nodes).collect();
                space.dof_of_node = (0..n_nodes).collect();
            }
            Boundary::Dirichlet => {
                let mut dof_of_node = vec![usize::MAX; n_nodes];
                let mut free = Vec::new();
                for i in 0..n_nodes {
                    if !space.is_boundary_node(i) {
                        dof_of_node[i] = free.len();
                        free.push(i);
                    }
                }
                space.restriction = Some(Restriction::new(&space.pattern, &free));
                space.free = free;
                space.dof_of_node = dof_of_node;
            }
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &[Interval] {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    /// Node count before Dirichlet elimination.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Unknowns after Dirichlet elimination (equals `n_nodes` for natural bc).
    pub fn n_dofs(&self) -> usize {
        self.free.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elems_per_axis.iter().product()
    }

    pub fn elements_per_axis(&self) -> &[usize] {
        &self.elems_per_axis
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis
    }

    /// Measure of the domain.
    pub fn volume(&self) -> f64 {
        self.domain.iter().map(Interval::length).product()
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Pattern of the operators acting on the unknowns.
    pub fn dof_pattern(&self) -> &Arc<Pattern> {
        match &self.restriction {
            Some(r) => r.pattern(),
            None => &self.pattern,
        }
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let npe = self.reference.npe;
        &self.elements[e * npe..(e + 1) * npe]
    }

    pub(crate) fn element_slots(&self, e: usize) -> &[usize] {
        let k = self.reference.npe * self.reference.npe;
        &self.slots[e * k..(e + 1) * k]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.domain[0].lo + e as f64 * self.h, 0.0],
            _ => {
                let mx = self.elems_per_axis[0];
                let (ex, ey) = (e % mx, e / mx);
                [
                    self.domain[0].lo + ex as f64 * self.h,
                    self.domain[1].lo + ey as f64 * self.h,
                ]
            }
        }
    }

    /// Jacobian determinant of the affine element map.
    pub fn element_jacobian(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Physical coordinates of quadrature point `q` in element `e`.
    pub fn quad_point(&self, e: usize, q: usize) -> [f64; 2] {
        let o = self.element_origin(e);
        let r = self.reference.points[q];
        [o[0] + self.h * r[0], o[1] + self.h * r[1]]
    }

    /// Physical coordinates of node `i` (unused axes are zero).
    pub fn node_coords(&self, i: usize) -> [f64; 2] {
        let half = 0.5 * self.h;
        match self.dim {
            1 => [self.domain[0].lo + i as f64 * half, 0.0],
            _ => {
                let nx = self.nodes_per_axis[0];
                let (ix, iy) = (i % nx, i / nx);
                [
                    self.domain[0].lo + ix as f64 * half,
                    self.domain[1].lo + iy as f64 * half,
                ]
            }
        }
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        let nx = self.nodes_per_axis[0];
        let ix = i % nx;
        if ix == 0 || ix == nx - 1 {
            return true;
        }
        if self.dim == 2 {
            let iy = i / nx;
            return iy == 0 || iy == self.nodes_per_axis[1] - 1;
        }
        false
    }

    /// Node index of every unknown.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Unknown index of node `i`, `None` for eliminated boundary nodes.
    pub fn dof_of_node(&self, i: usize) -> Option<usize> {
        match self.dof_of_node[i] {
            usize::MAX => None,
            d => Some(d),
        }
    }

    /// Restricts a full operator to the unknowns (identity copy for natural bc).
    pub fn to_dofs(&self, full: SparseSymMatrix) -> SparseSymMatrix {
        match &self.restriction {
            Some(r) => r.apply(&full),
            None => full,
        }
    }

    /// Extends a vector on the unknowns to all nodes, with zeros on the
    /// eliminated boundary.
    pub fn extend(&self, dofs: &[f64]) -> Vec<f64> {
        if self.bc == Boundary::Natural {
            return dofs.to_vec();
        }
        let mut full = vec![0.0; self.n_nodes];
        for (d, &i) in self.free.iter().enumerate() {
            full[i] = dofs[d];
        }
        full
    }

    /// Entries of a nodal vector belonging to the unknowns.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        if self.bc == Boundary::Natural {
            return full.to_vec();
        }
        self.free.iter().map(|&i| full[i]).collect()
    }
}

/// Symmetric elimination of the boundary rows and columns of a full
/// (all-node) operator.
pub fn constrain_dirichlet(space: &FemSpace, full: &SparseSymMatrix) -> Result<SparseSymMatrix> {
    match &space.restriction {
        None => Err(Error::Usage(
            "constrain_dirichlet called on a space with natural boundary conditions".into(),
        )),
        Some(r) => {
            if full.n() != space.n_nodes() {
                return Err(Error::Shape {
                    what: "full operator",
                    expected: space.n_nodes(),
                    got: full.n(),
                });
            }
            Ok(r.apply(full))
        }
    }
}

/// Restriction of a nodal vector to the interior unknowns.
pub fn constrain_dirichlet_vector(space: &FemSpace, full: &[f64]) -> Result<Vec<f64>> {
    if space.bc != Boundary::Dirichlet {
        return Err(Error::Usage(
            "constrain_dirichlet_vector called on a space with natural boundary conditions".into(),
        ));
    }
    if full.len() != space.n_nodes() {
        return Err(Error::Shape {
            what: "nodal vector",
            expected: space.n_nodes(),
            got: full.len(),
        });
    }
    Ok(space.free.iter().map(|&i| full[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(bc: Boundary, h: f64) -> FemSpace {
        FemSpace::build(&[Interval::new(0.0, 1.0)], h, bc).unwrap()
    }

    #[test]
    fn two_elements_give_five_nodes() {
        let s = unit(Boundary::Natural, 0.5);
        assert_eq!(s.n_nodes(), 5);
        let xs: Vec<f64> = (0..5).map(|i| s.node_coords(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn benchmark_1d_dof_count() {
        let s = FemSpace::build(
            &[Interval::new(-16.0, 16.0)],
            32.0 / 1024.0,
            Boundary::Natural,
        )
        .unwrap();
        assert_eq!(s.n_nodes(), 2049);
    }

    #[test]
    fn benchmark_2d_dof_count_without_building() {
        // (2·1024 + 1)² nodes; building the full pattern is the optional long run.
        let m = 1024usize;
        assert_eq!((2 * m + 1) * (2 * m + 1), 4_198_401);
    }

    #[test]
    fn small_2d_nodes_are_lexicographic() {
        let s = FemSpace::build(
            &[Interval::new(0.0, 1.0), Interval::new(0.0, 2.0)],
            1.0,
            Boundary::Natural,
        )
        .unwrap();
        assert_eq!(s.n_nodes(), 3 * 5);
        assert_eq!(s.node_coords(1), [0.5, 0.0]);
        assert_eq!(s.node_coords(3), [0.0, 0.5]);
        for i in 0..s.n_nodes() {
            let c = s.node_coords(i);
            assert!((0.0..=1.0).contains(&c[0]) && (0.0..=2.0).contains(&c[1]));
        }
    }

    #[test]
    fn non_commensurate_width_is_rejected() {
        let err = FemSpace::build(&[Interval::new(0.0, 1.0)], 0.3, Boundary::Natural).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn tiny_width_is_a_capacity_error() {
        let err =
            FemSpace::build(&[Interval::new(0.0, 1.0)], 1e-300, Boundary::Natural).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
        let err = FemSpace::build(
            &[Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)],
            2f64.powi(-17),
            Boundary::Natural,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn dirichlet_removes_boundary_nodes() {
        let s = unit(Boundary::Dirichlet, 0.5);
        assert_eq!(s.n_dofs(), 3);
        assert_eq!(s.free_nodes(), &[1, 2, 3]);
        assert_eq!(s.extend(&[1.0, 2.0, 3.0]), vec![0.0, 1.0, 2.0, 3.0, 0.0]);
        assert_eq!(
            constrain_dirichlet_vector(&s, &[9.0, 1.0, 2.0, 3.0, 9.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn natural_space_refuses_elimination() {
        let s = unit(Boundary::Natural, 0.5);
        assert!(matches!(
            constrain_dirichlet_vector(&s, &[0.0; 5]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for dim in [1, 2] {
            let r = ReferenceElement::new(dim);
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-15);
            // Shape functions form a partition of unity at every point.
            for q in 0..r.nq {
                let s: f64 = r.values[q * r.npe..(q + 1) * r.npe].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }
}
