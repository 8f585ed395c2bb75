use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("site index {index} out of range for {len} factors")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("pole: {0}")]
    Pole(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("series does not converge: {0}")]
    NonConvergence(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("parameter outside the convergence region: {0}")]
    Domain(String),
    #[error("tail certificate failed: {0}")]
    TailCertificate(String),
    #[error("spectral parameter in the exclusion set: {0}")]
    Excluded(String),
    #[error("unknown generator {0}")]
    UnknownGenerator(String),
    #[error("root pairing failed: {0}")]
    Pairing(String),
    #[error("unresolved degeneracy: {0}")]
    Degeneracy(String),
    #[error("newton iteration failed: {0}")]
    Newton(String),
}

pub type Result<T> = std::result::Result<T, Error>;
