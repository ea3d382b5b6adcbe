use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel detected loss of precision or an internal inconsistency.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid run or sweep configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Data integrity violation (e.g. trajectory mass on a null Born cell).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A fit could not detect any decay in the input series.
    #[error("no-decay error: {0}")]
    NoDecay(String),

    /// Fit did not converge within the iteration budget.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
