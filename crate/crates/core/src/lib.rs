//! Implicit-in-time solver for the two-dimensional barotropic compressible
//! Navier-Stokes system with Navier slip walls.
//!
//! Each time step solves a stationary problem: a cutoff-regularized continuity
//! equation with artificial diffusion `eps`, coupled to a Lamé system through a
//! damped Picard iteration. Everything here is allocation-only numerics; file
//! formats, configuration and the CLI live in the `navslip` crate.
//!
//! Layout:
//!
//! * [`params`]: scheme constants, cutoff `K`, modified pressure `P`.
//! * [`grid`]: MAC grid, fields, discrete operators and norms.
//! * [`linsolve`]: CSR operators with CG / BiCGSTAB.
//! * [`continuity`]: density sub-solver.
//! * [`momentum`]: forcing assembly and the Lamé sub-solver.
//! * [`stepper`]: coupled time step, time loop, `eps` continuation.
//! * [`diagnostics`]: energy and entropy ledgers, Helmholtz split, effective
//!   viscous flux, weak-form residuals, time-difference norms.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod continuity;
pub mod diagnostics;
mod error;
pub mod fit;
pub mod grid;
pub mod linsolve;
pub mod math;
pub mod momentum;
pub mod params;
pub mod stepper;
pub mod testfn;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, VectorField};
pub use params::Params;
pub use stepper::{State, StepReport};
