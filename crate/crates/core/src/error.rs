use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the optimization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not match the object they are applied to.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value is outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation precondition does not hold (e.g. infeasible point).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A Markov chain failed a construction-time check.
    #[error("chain construction failed: {0}")]
    ChainConstruction(String),

    /// An optimization run was aborted mid-flight, typically because an
    /// oracle produced a non-finite value.
    #[error("run aborted at iteration {t}: {reason}")]
    AbortedRun { t: usize, reason: String },

    /// An iterative inner solver ran out of its iteration budget before
    /// reaching the requested tolerance.
    #[error("inner solver exhausted {iters} iterations: residual {residual:.3e} > tol {tol:.3e}")]
    InnerSolver {
        iters: usize,
        residual: f64,
        tol: f64,
    },

    /// The operation is not defined for this problem (e.g. gradient mapping
    /// of a nonsmooth objective).
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}
