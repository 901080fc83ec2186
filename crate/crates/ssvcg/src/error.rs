//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input fell outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A profile that must be sorted in descending order was not.
    #[error("bid profile is not sorted in descending order")]
    NotDescending,

    #[error("agent index {index} out of range for n = {n}")]
    AgentIndex { index: usize, n: usize },

    /// An iterative solve ran out of its iteration budget. For the
    /// water-filling solver this signals a non-conforming custom utility
    /// (marginal not strictly decreasing, or not bracketable).
    #[error("{what} did not converge within {iterations} iterations")]
    Convergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("no usable samples: {0}")]
    EmptySamples(&'static str),

    #[error("cover would contain {estimated} points, above the cap {cap}")]
    CoverTooLarge { estimated: u128, cap: usize },

    #[error("simplex pivot magnitude {pivot:e} is below the stability threshold {threshold:e}")]
    PivotInstability { pivot: f64, threshold: f64 },

    /// A solution recovered from the dual program failed re-verification
    /// against the primal rows.
    #[error("linear program solution failed verification: {0}")]
    LpVerification(String),

    #[error("invalid rebate coefficients: {0}")]
    BadCoefficients(String),

    #[error("invalid {what}: {detail}")]
    Parse { what: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
