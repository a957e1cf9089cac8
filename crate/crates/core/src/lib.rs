//! Surface finite elements for closed triangulated membranes.
//!
//! The crate computes a lifted, continuous mean-curvature field on a
//! piecewise polynomial surface from its distributional shape operator
//! (element-wise normal derivative plus the normal-jump angle on every edge),
//! evaluates the Canham-Helfrich-Evans bending energy from it, assembles the
//! analytic first shape derivative of the penalized energy, and minimizes it
//! with an H¹ gradient line search.
//!
//! Geometry is never moved: every deformation is a displacement field over a
//! fixed reference mesh, and all assembly pulls back through it.
//!
//! Module map:
//! - [`mesh`]: closed triangle meshes, benchmark generators, curving, frames and measures
//! - [`fem`]: Lagrange spaces, quadrature, sparse assembly and linear solvers
//! - [`curvature`]: averaged normals, curvature lifting, adjoint, energy and error norms
//! - [`shape_derivative`]: shape-derivative loads and a finite-difference validator
//! - [`optimizer`]: penalized cost, Riesz gradients and the descent loop
//! - [`io`]: configuration files, OBJ/VTK/CSV output

pub mod curvature;
pub mod error;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod optimizer;
pub mod shape_derivative;

pub use error::{Error, Result};

/// 3D vector type used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix type used for tangential Jacobians and shape operators.
pub type Mat3 = nalgebra::Matrix3<f64>;
