//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

/// Errors produced by tensor ops, graph construction, data handling and
/// training. Every variant carries a human-readable diagnostic naming the
/// offending dimension, node, stage or file as appropriate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor shapes do not conform for the requested operation.
    ShapeMismatch(String),
    /// A specification (conv spec, PEPX spec, config) violates its invariants.
    InvalidSpec(String),
    /// Manifest, label or sampler input is invalid.
    InvalidData(String),
    /// An architecture graph failed validation.
    InvalidGraph(String),
    /// A non-finite value was produced where finite values are required.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
