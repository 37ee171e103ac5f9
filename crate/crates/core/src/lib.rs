//! Nonlinear diffractive imaging.
//!
//! Simulates scattering through the discretised Lippmann-Schwinger model (2D scalar and
//! 3D vectorial) and reconstructs real permittivity contrast by minimising a nonconvex
//! least-squares data term plus total variation and a box constraint with relaxed FISTA.
//! First-Born and iterative-linearisation baselines share the same machinery.

pub mod cli;
pub mod config;
pub mod convolution;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod geometry;
pub mod gradient;
pub mod io;
pub mod krylov;
pub mod operators;
pub mod optim;
pub mod phantom;
pub mod special;
pub mod tv;
pub mod vectorial;

pub use error::{Error, Result};
pub use num_complex::Complex64;
