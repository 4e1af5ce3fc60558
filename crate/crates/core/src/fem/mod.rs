//! Tensor-product quadratic finite elements on intervals and rectangles.

mod assembly;
mod space;
mod sparse;

pub use assembly::{
    assemble_load, assemble_mass, assemble_stiffness, assemble_weighted_mass, integrate_quadrature,
    interpolate_at_quadrature, sample_at_quadrature, Weight,
};
pub use space::{
    constrain_dirichlet, constrain_dirichlet_vector, Boundary, FemSpace, Interval,
    ReferenceElement, MAX_NODES, NODES_1D, QUAD_POINTS_1D,
};
pub use sparse::{Pattern, Restriction, SparseSymMatrix};
