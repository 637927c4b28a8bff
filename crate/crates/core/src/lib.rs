//! Space-time finite element discretizations of the one-dimensional heat
//! and convection-diffusion equations.

pub mod assembly;
pub mod error;
pub mod fe1d;
pub mod linalg;
pub mod norms;
pub mod quadrature;
pub mod stability;
pub mod study;
pub mod sparse;
pub mod systems;

pub use error::{Error, Result};
