//! Lagrange spaces, quadrature, sparse assembly and linear solvers.

pub mod assembly;
pub mod quadrature;
pub mod solve;
pub mod space;
pub mod sparse;

pub use assembly::{
    assemble_divergence, assemble_h1_metric, assemble_mass, assemble_scalar_h1, assemble_scalar_load,
    DEFAULT_METRIC_EPSILON,
};
pub use quadrature::{quadrature, Domain, QuadratureRule};
pub use solve::{solve_saddle, solve_saddle_block3, solve_spd, DEFAULT_REL_TOL};
pub use space::{ScalarSpace, VectorSpace};
pub use sparse::CsrMatrix;
