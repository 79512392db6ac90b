pub mod cli;
pub mod diffusion;
pub mod error;
pub mod field;
pub mod grid;
pub mod helmholtz;
pub mod io;
pub mod linalg;
pub mod inversion;
pub mod model;
pub mod synthetics;

pub use error::{Error, Result};
pub use field::{relative_error, ComplexField, ScalarField};
pub use grid::Grid2D;
pub use model::{slowness_to_speed, speed_to_slowness, Model};
