//! Weighted energy-norm best approximation on triangulations with
//! piecewise-constant diffusion coefficients: quasi-monotonicity checks,
//! local and global best errors, quasi-interpolation and counterexample
//! builders.

pub mod bestapprox;
pub mod coeff;
pub mod counterexamples;
pub mod error;
pub mod fespace;
pub mod harness;
pub mod field;
pub mod interp;
pub mod mesh;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
