//! Configuration, file formats and experiment orchestration for the
//! `navslip-core` solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod presets;

pub use config::{ExperimentConfig, Mode};
pub use error::HarnessError;
