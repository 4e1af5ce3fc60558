//! Ground states of multicomponent Bose–Einstein condensates.
//!
//! The coupled Gross–Pitaevskii energy is discretized with quadratic finite
//! elements and minimized over the generalized oblique manifold
//! `{Φ : ddiag(ΦᵀMΦ) = N}` by Riemannian gradient descent (L², energy-adaptive
//! and Lagrangian metrics, plain and alternating) and by (regularized)
//! Riemannian Newton iterations.

pub mod error;
pub mod fem;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod operators;
pub mod optim;
pub mod oracles;

pub use error::{Error, Result};
