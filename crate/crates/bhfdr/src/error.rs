//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in a computation or a sweep.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// The BH limiting positive-call fraction is zero: no asymptotic discoveries.
    #[error("degenerate design: the limiting positive call fraction is 0 (no asymptotic discoveries)")]
    DegenerateDesign,

    /// A reduced-FDR bound has no admissible solution for this `m`.
    #[error("infeasible bound: {msg}")]
    InfeasibleBound { msg: String, min_feasible_m: Option<u64> },

    /// A sample-size search hit its upper limit without reaching the target.
    #[error("sample-size search exhausted at n = {n_max} (best value {best:.6} < target {target:.6})")]
    SearchExhausted { n_max: u32, best: f64, target: f64 },

    /// An iterative method failed to converge.
    #[error("numerical failure in {op}: {msg}")]
    Numerical { op: &'static str, msg: String },

    /// A partial-derivative step left the valid parameter domain.
    #[error("boundary error: {0}")]
    Boundary(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A reference table does not match the result schema.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// The expanded grid is empty.
    #[error("empty grid: {0}")]
    EmptyGrid(String),

    /// I/O failure while reading or writing results.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { op, msg: msg.into() }
    }

    pub(crate) fn numerical(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Numerical { op, msg: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
