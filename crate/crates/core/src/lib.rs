//! Average-field energy functional for almost-bosonic anyons with smeared
//! flux, together with the numerical checks that accompany it.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernel`]: smoothing profile, smeared potential and its transforms
//! * [`fields`]: external vector potentials and confining traps
//! * [`grid`]: uniform grids, FFTs and wave functions
//! * [`afm`]: the self-consistent functional, its gradient and minimizer
//! * [`spectral`]: one-body magnetic Schrödinger operator and level counting
//! * [`inequality`]: randomized and quadrature checks of functional inequalities
//! * [`fewbody`]: exact diagonalization for two particles
//! * [`export`]: binary and CSV output

pub mod afm;
pub mod eigen;
pub mod error;
pub mod export;
pub mod fewbody;
pub mod fields;
pub mod grid;
pub mod inequality;
pub mod kernel;
pub mod quad;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid2D, VectorField, WaveFunction};
pub use kernel::{SmearedKernel, SmoothingProfile};
