//! Error type shared by every module of the crate.

use alloc::string::String;
use core::fmt;

/// Failure modes of the numerical routines.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation. The message
    /// names the violated constraint, for example `requires 1/2 < Re α < 1`.
    Domain(String),
    /// The argument is a pole of the function.
    Pole(String),
    /// The argument lies on a singular set such as the cone `|τ| = |ξ|`.
    Singular(String),
    /// A quadrature or series produced a non-finite value at `at`.
    Numerical {
        /// Abscissa at which the failure occurred.
        at: f64,
        /// Description of the failure.
        message: String,
    },
    /// A parameter scan found no admissible point.
    Infeasible(String),
    /// A construction failed one of its own certificates.
    Construction(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Pole(msg) => write!(f, "pole: {msg}"),
            Error::Singular(msg) => write!(f, "singular set: {msg}"),
            Error::Numerical { at, message } => {
                write!(f, "numerical failure at {at:e}: {message}")
            }
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::Construction(msg) => write!(f, "construction failed: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

/// Result alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Builds an [`Error::Domain`] from anything printable.
pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
