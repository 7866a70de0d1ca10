//! Smooth transonic spiral flows of the steady compressible Euler equations.
//!
//! The crate builds radial transonic background flows in an annulus, solves the linearized
//! mixed-type potential equation with a Fourier-Galerkin reduction, and runs the nonlinear
//! irrotational, rotational and axisymmetric fixed-point iterations on top of it.

// NaN-rejecting comparisons (`!(x > 0.0)`) and index loops over stencils are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod axisym;
pub mod background;
pub mod banded;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod field2d;
pub mod fourier;
pub mod gas;
pub mod io;
pub mod numerics;
pub mod ode;
pub mod potential;
pub mod probes;
pub mod profile;
pub mod report;
pub mod rotational;
pub mod run;
pub mod sonic;
pub mod spectral;

pub use error::{Error, Result};
