use thiserror::Error;

/// Errors produced by the library.  Variants distinguish bad inputs
/// (`Invalid`, `Domain`) from structural failures detected at run time
/// (`Singular`, `NoContraction`, `NoConvergence`, `IncompatibleDomains`).
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data: dimension mismatch, non-Hermitian Gram matrix,
    /// parameter outside its admissible range, unparsable configuration.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Input outside the mathematical domain of an operation (negative time,
    /// spectrum touching the branch cut of the square root, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear solve hit a (numerically) singular operator.
    #[error("singular operator: {0}")]
    Singular(String),

    /// The shift sweep exhausted its range without making the Volterra
    /// perturbation a contraction below the target.
    #[error("no contraction: estimated norm {best_norm:.3e} at shift {best_mu:.3e} still above target {target}")]
    NoContraction {
        target: f64,
        best_mu: f64,
        best_norm: f64,
        /// (shift, estimated norm) pairs tried, in sweep order.
        history: Vec<(f64, f64)>,
    },

    /// Fixed-point iteration failed to reach the tolerance.
    #[error("no convergence after {iterations} iterations, last residual {last:.3e}")]
    NoConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    /// Square-root domains on the two sides of a gluing breakpoint are too
    /// far apart to splice solutions.
    #[error("incompatible square-root domains at breakpoint {breakpoint}: kappa {kappa:.3e} exceeds {kappa_max:.3e}")]
    IncompatibleDomains {
        breakpoint: f64,
        kappa: f64,
        kappa_max: f64,
    },

    /// Quotient-style diagnostics received data that makes the quotient
    /// meaningless (large numerator over vanishing denominator).
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn singular(msg: impl Into<String>) -> Self {
        Error::Singular(msg.into())
    }
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
