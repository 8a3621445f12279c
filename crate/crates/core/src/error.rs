//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
///
/// Variants are grouped by *what the caller should do about them*: fix the
/// configuration, fix the call arguments, shrink the problem, supply more
/// data, or treat the computation as numerically failed.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration object violates its own invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A call-site precondition was violated (bad argument combination).
    #[error("invalid input: {0}")]
    Input(String),

    /// A textual representation could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// The requested problem size exceeds an exact-arithmetic or
    /// enumeration bound.
    #[error("problem size too large: {0}")]
    TooLarge(String),

    /// A lag-series lookup needed values at lags that were not supplied.
    #[error("insufficient lag coverage: missing lags {missing:?}")]
    MissingLags {
        /// The lags (after symmetry folding) that were required but absent.
        missing: Vec<i64>,
    },

    /// A linear system or feature matrix is (numerically) rank deficient.
    #[error("degenerate linear system: {0}")]
    Degenerate(String),

    /// An iterative method exhausted its budget without meeting tolerance.
    #[error("failed to converge: {0}")]
    NoConvergence(String),

    /// An iterate left the finite range during a simulation.
    #[error("numerical divergence at step {step}: {quantity}")]
    Diverged {
        /// Step counter at which the non-finite value was detected.
        step: u64,
        /// Which tracked quantity diverged.
        quantity: String,
    },
}
