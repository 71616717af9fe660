//! Simulation and verification toolkit for the viscoelastic wave equation
//! with fading memory (past-history formulation) and singularly oscillating
//! external forcing.

pub mod error;
pub mod analysis;
pub mod dynamics;
pub mod forcing;
pub mod kernels;
pub mod spectral;
pub mod harness;
pub mod state;
mod quad;

pub use error::{Error, Result};
