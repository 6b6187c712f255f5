pub mod cli;
pub mod density;
pub mod error;
pub mod exercise_boundary;
pub mod grid;
pub mod lsmc;
pub mod margrabe;
pub mod model;
pub mod pricer;
pub mod quadrature;
pub mod riccati;

pub use error::{Error, Result};
pub use grid::{build_mesh, Mesh, MeshSpec, Segment, SegmentList};
pub use model::{JumpSpec, ModelParams, ValidationReport, VarianceParams};
