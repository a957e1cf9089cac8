//! Configuration files, mesh and field output, and run logs.
//!
//! All floating-point output uses 17 significant digits so files are
//! bit-stable for identical inputs.

pub mod config;
pub mod csv;
pub mod obj;
pub mod vtk;

pub use config::{parse_config, parse_config_str, GeometrySpec, OutputSpec, RunConfig, ShapeKind};
pub use csv::{write_csv_log, CsvLogWriter};
pub use obj::{read_obj, write_obj};
pub use vtk::write_vtk;
