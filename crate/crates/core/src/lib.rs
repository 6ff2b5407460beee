pub mod analysis;
pub mod bvg;
pub mod error;
pub mod grid;
pub mod io;
pub mod poisson;
pub mod projector;
pub mod roads;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Boundary, BvNorm, DualField, Grid, Image};
