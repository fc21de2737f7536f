use thiserror::Error;

/// Errors raised by the solvers and the scenario loader.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value violates a domain invariant (the message names the field).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two sequences that must have one entry per period disagree in length.
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("period index {index} out of range 1..={periods}")]
    PeriodOutOfRange { index: usize, periods: usize },

    #[error("instance too large for enumeration: {periods} periods exceeds cap {cap}")]
    TooLargeForEnumeration { periods: usize, cap: usize },

    /// The active-set iteration hit its cap. Never expected on valid input.
    #[error("active-set iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// A zero-curvature descent ray met no constraint.
    #[error("quadratic subproblem is unbounded")]
    UnboundedSubproblem,

    #[error("plan for firm {firm} is infeasible: {detail}")]
    InfeasiblePlan { firm: usize, detail: String },

    #[error("deterrence infeasible: {0}")]
    DeterrenceInfeasible(String),
}

impl Error {
    /// True for errors caused by bad user input rather than by a solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::LengthMismatch { .. }
                | Error::PeriodOutOfRange { .. }
                | Error::InfeasiblePlan { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
