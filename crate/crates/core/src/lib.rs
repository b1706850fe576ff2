//! Drift-diffusion near Lennard-Jones trapping walls, and the reduced model in
//! which the trap layer is collapsed into a dynamic boundary condition.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod solver_full;
pub mod solver_multiscale;
pub mod validation;

pub use error::{Error, Result};
