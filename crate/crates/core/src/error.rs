use alloc::string::String;
use core::fmt;

use crate::linsolve::SolveStats;

/// Failures surfaced by the solver and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter set violates one or more invariants; every violation is listed.
    InvalidParams(alloc::vec::Vec<String>),
    /// A density or pressure was requested for a negative argument.
    Domain { what: &'static str, value: f64 },
    /// Two fields (or a field and a grid) do not share dimensions.
    GridMismatch,
    /// An `L^q` norm was requested with `q < 1`.
    BadExponent(f64),
    /// Krylov iteration hit its cap or broke down.
    LinearSolve { stats: SolveStats, breakdown: bool },
    /// The lagged-cutoff iteration of the density solve did not settle.
    DensityPicard { iterations: usize, last_update: f64 },
    /// The coupled Picard iteration of a time step did not settle.
    StepPicard { step: usize, report: alloc::boxed::Box<crate::stepper::StepReport> },
    /// A diagnostic needs more data than it was given.
    Insufficient(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(list) => {
                write!(f, "invalid parameters: ")?;
                for (i, m) in list.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{m}")?;
                }
                Ok(())
            }
            Error::Domain { what, value } => write!(f, "{what} undefined for argument {value}"),
            Error::GridMismatch => write!(f, "fields live on different grids"),
            Error::BadExponent(q) => write!(f, "norm exponent {q} is below 1"),
            Error::LinearSolve { stats, breakdown } => write!(
                f,
                "linear solve {} after {} iterations (relative residual {:.3e})",
                if *breakdown { "broke down" } else { "did not converge" },
                stats.iterations,
                stats.residual
            ),
            Error::DensityPicard { iterations, last_update } => write!(
                f,
                "density iteration did not converge in {iterations} sweeps (last update {last_update:.3e})"
            ),
            Error::StepPicard { step, report } => write!(
                f,
                "time step {step} did not converge in {} Picard iterations",
                report.picard_iterations
            ),
            Error::Insufficient(what) => write!(f, "insufficient data: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
