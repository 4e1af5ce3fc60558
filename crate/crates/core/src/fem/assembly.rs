//! Element loops for the mass, stiffness and weighted mass matrices.
//!
//! The loops run sequentially over elements in mesh order and scatter into a
//! shared value array, so repeated assemblies are bitwise identical.

use super::space::FemSpace;
use super::sparse::SparseSymMatrix;
use crate::error::{Error, Result};

/// Weight function of a weighted mass matrix `∫ w φ_a φ_b`.
#[derive(Clone, Copy)]
pub enum Weight<'a> {
    Constant(f64),
    /// Callable field evaluated at physical quadrature points.
    Field(&'a dyn Fn(&[f64]) -> f64),
    /// Precomputed values at all quadrature points, element-major.
    Quadrature(&'a [f64]),
    /// Pointwise product `u·v` of two nodal finite element functions.
    Product(&'a [f64], &'a [f64]),
}

impl std::fmt::Debug for Weight<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weight::Constant(c) => write!(f, "Constant({c})"),
            Weight::Field(_) => write!(f, "Field(..)"),
            Weight::Quadrature(v) => write!(f, "Quadrature(len={})", v.len()),
            Weight::Product(u, _) => write!(f, "Product(n={})", u.len()),
        }
    }
}

/// Values of the nodal finite element function `coeffs` at every quadrature
/// point, element-major (`n_elements * quad_points` entries).
pub fn interpolate_at_quadrature(space: &FemSpace, coeffs: &[f64]) -> Vec<f64> {
    let r = space.reference();
    let mut out = Vec::with_capacity(space.n_elements() * r.nq);
    for e in 0..space.n_elements() {
        let nodes = space.element_nodes(e);
        for q in 0..r.nq {
            let shape = &r.values[q * r.npe..(q + 1) * r.npe];
            out.push(shape.iter().zip(nodes).map(|(s, &i)| s * coeffs[i]).sum());
        }
    }
    out
}

/// Samples `f` at every physical quadrature point, element-major.
pub fn sample_at_quadrature(space: &FemSpace, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let r = space.reference();
    let d = space.dim();
    let mut out = Vec::with_capacity(space.n_elements() * r.nq);
    for e in 0..space.n_elements() {
        for q in 0..r.nq {
            let x = space.quad_point(e, q);
            out.push(f(&x[..d]));
        }
    }
    out
}

/// `∫_Ω g` for `g` given at the quadrature points.
pub fn integrate_quadrature(space: &FemSpace, values: &[f64]) -> f64 {
    let r = space.reference();
    let jac = space.element_jacobian();
    values
        .chunks(r.nq)
        .map(|vals| vals.iter().zip(&r.weights).map(|(v, w)| v * w).sum::<f64>() * jac)
        .sum()
}

fn check_nodal(space: &FemSpace, v: &[f64]) -> Result<()> {
    if v.len() != space.n_nodes() {
        return Err(Error::Shape {
            what: "weight coefficient vector",
            expected: space.n_nodes(),
            got: v.len(),
        });
    }
    Ok(())
}

fn scatter(space: &FemSpace, e: usize, local: &[f64], values: &mut [f64]) {
    for (slot, v) in space.element_slots(e).iter().zip(local) {
        values[*slot] += v;
    }
}

/// Load vector `∫ g φ_a` on all nodes for `g` given at the quadrature points.
pub fn assemble_load(space: &FemSpace, values: &[f64]) -> Result<Vec<f64>> {
    let r = space.reference();
    let (npe, nq) = (r.npe, r.nq);
    if values.len() != space.n_elements() * nq {
        return Err(Error::Shape {
            what: "quadrature values",
            expected: space.n_elements() * nq,
            got: values.len(),
        });
    }
    let jac = space.element_jacobian();
    let mut out = vec![0.0; space.n_nodes()];
    for e in 0..space.n_elements() {
        let nodes = space.element_nodes(e);
        for q in 0..nq {
            let g = values[e * nq + q] * r.weights[q] * jac;
            let shape = &r.values[q * npe..(q + 1) * npe];
            for (s, &i) in shape.iter().zip(nodes) {
                out[i] += g * s;
            }
        }
    }
    Ok(out)
}

/// Weighted mass matrix on all nodes.
pub fn assemble_weighted_mass(space: &FemSpace, weight: Weight<'_>) -> Result<SparseSymMatrix> {
    let r = space.reference();
    let (npe, nq) = (r.npe, r.nq);
    let d = space.dim();
    match weight {
        Weight::Product(u, v) => {
            check_nodal(space, u)?;
            check_nodal(space, v)?;
        }
        Weight::Quadrature(w) if w.len() != space.n_elements() * nq => {
            return Err(Error::Shape {
                what: "quadrature weights",
                expected: space.n_elements() * nq,
                got: w.len(),
            })
        }
        _ => {}
    }
    let jac = space.element_jacobian();
    let mut matrix = SparseSymMatrix::zeros(space.pattern().clone());
    let mut local = vec![0.0; npe * npe];
    let mut wq = vec![0.0; nq];
    for e in 0..space.n_elements() {
        match weight {
            Weight::Constant(c) => wq.fill(c),
            Weight::Field(f) => {
                for (q, w) in wq.iter_mut().enumerate() {
                    let x = space.quad_point(e, q);
                    *w = f(&x[..d]);
                }
            }
            Weight::Quadrature(w) => wq.copy_from_slice(&w[e * nq..(e + 1) * nq]),
            Weight::Product(u, v) => {
                let nodes = space.element_nodes(e);
                for (q, w) in wq.iter_mut().enumerate() {
                    let shape = &r.values[q * npe..(q + 1) * npe];
                    let (mut uq, mut vq) = (0.0, 0.0);
                    for (s, &i) in shape.iter().zip(nodes) {
                        uq += s * u[i];
                        vq += s * v[i];
                    }
                    *w = uq * vq;
                }
            }
        }
        local.fill(0.0);
        for q in 0..nq {
            let scale = wq[q] * r.weights[q] * jac;
            let shape = &r.values[q * npe..(q + 1) * npe];
            for a in 0..npe {
                let sa = scale * shape[a];
                for b in a..npe {
                    local[a * npe + b] += sa * shape[b];
                }
            }
        }
        // Mirror the upper triangle so the element matrix is exactly symmetric.
        for a in 0..npe {
            for b in 0..a {
                local[a * npe + b] = local[b * npe + a];
            }
        }
        scatter(space, e, &local, matrix.values_mut());
    }
    Ok(matrix)
}

/// L²-mass matrix on all nodes.
pub fn assemble_mass(space: &FemSpace) -> SparseSymMatrix {
    assemble_weighted_mass(space, Weight::Constant(1.0)).expect("constant weight")
}

/// Stiffness matrix `∫ ∇φ_a·∇φ_b` on all nodes.
pub fn assemble_stiffness(space: &FemSpace) -> SparseSymMatrix {
    let r = space.reference();
    let (npe, nq) = (r.npe, r.nq);
    let h = space.h();
    let jac = space.element_jacobian();
    let mut matrix = SparseSymMatrix::zeros(space.pattern().clone());
    let mut local = vec![0.0; npe * npe];
    for e in 0..space.n_elements() {
        local.fill(0.0);
        for q in 0..nq {
            let scale = r.weights[q] * jac / (h * h);
            let grads = &r.grads[q * npe * 2..(q + 1) * npe * 2];
            for a in 0..npe {
                let (ga0, ga1) = (grads[2 * a], grads[2 * a + 1]);
                for b in 0..npe {
                    local[a * npe + b] += scale * (ga0 * grads[2 * b] + ga1 * grads[2 * b + 1]);
                }
            }
        }
        scatter(space, e, &local, matrix.values_mut());
    }
    matrix
}
