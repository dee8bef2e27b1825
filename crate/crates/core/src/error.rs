//! Crate-wide error type.

use alloc::string::String;

/// Errors surfaced by fallible operations across the crate.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violated a documented precondition
    /// (e.g. `k > n` in a neighbor query, mismatched lengths).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A numeric computation produced NaN or Inf where finite values are
    /// required (inputs are validated, so this indicates divergence).
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// A configuration value or combination is unusable
    /// (e.g. a feature width that does not divide evenly into heads).
    #[error("invalid config: {0}")]
    Config(String),
}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidArgument`] from anything displayable.
    pub fn arg(msg: impl core::fmt::Display) -> Self {
        Error::InvalidArgument(alloc::format!("{msg}"))
    }

    /// Shorthand for [`Error::Config`] from anything displayable.
    pub fn config(msg: impl core::fmt::Display) -> Self {
        Error::Config(alloc::format!("{msg}"))
    }
}
