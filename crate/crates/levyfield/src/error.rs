//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested operation is not defined for this jump-measure family
    /// (e.g. small-jump simulation of an infinite-variation basis).
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// An integral required by the operation diverges for these parameters.
    #[error("divergent configuration: {0}")]
    Divergent(String),

    /// A geometric construction degenerated (e.g. grid cubes larger than the set).
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    /// Configuration parsing or cross-field validation failed.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An unsupported body/shape variant reached an operation.
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
