//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// An input violates a precondition (bad shape, out-of-range value,
    /// inconsistent configuration). Maps to a usage failure at the CLI.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to converge or produced unusable output
    /// (root bracketing, quadrature depth, integrator underflow, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The requested Fock-space truncation cannot faithfully represent the
    /// state (thermal tail or motional excursion spills past the cutoff).
    #[error("truncation error: {0}")]
    Truncation(String),

    /// The reference loop already closes to machine precision, so a closure
    /// ratio against it is meaningless.
    #[error("reference loop closes to machine precision; ratio undefined")]
    ClosedToMachinePrecision,
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn truncation(msg: impl Into<String>) -> Self {
        Error::Truncation(msg.into())
    }
}
