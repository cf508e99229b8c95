//! Mean curvature flow of graphs of maps between constant-curvature
//! manifolds, in arbitrary codimension.
//!
//! * [`geometry`]: SVD-adapted frames, second fundamental form and the terms
//!   of the evolution equation of the projection Jacobian `*Ω`.
//! * [`torus`]: explicit finite-difference graph flow for `T^n → T^m`.
//! * [`sphere`]: rotationally equivariant flow of maps `S^n → S^n`.
//! * [`verifier`]: residuals of the `*Ω` identities along discrete flows.
//! * [`monitor`]: Gaussian density quadrature and the regularity threshold.
//! * [`checkpoint`]: text checkpoint format shared by both solvers.

// Index loops mirror the tensor notation; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod exec;
pub mod geometry;
mod linalg;
pub mod monitor;
pub mod presets;
pub mod sphere;
pub mod torus;
pub mod verifier;

pub use error::{Error, Result};
pub use exec::Exec;
