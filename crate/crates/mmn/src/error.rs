use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MmnError {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("skewness vector out of range: delta' Omega_bar^-1 delta = {0}")]
    SkewnessOutOfRange(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("transformation matrix is rank deficient")]
    RankDeficient,
    #[error("root not bracketed in [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },
    #[error("argument {0} outside the domain of the moment generating function")]
    DomainError(f64),
    #[error("moment order {0} not supported (maximum 4)")]
    UnsupportedOrder(usize),
    #[error("quadrature did not converge (relative change {0:e})")]
    QuadratureNotConverged(f64),
    #[error("operation not available for mixing law {0}")]
    UnsupportedLaw(String),
    #[error("skewness vector is zero; use the normal density")]
    DegenerateSkewness,
    #[error("moment set is already central")]
    FlagMismatch,
    #[error("symmetric eigendecomposition failed")]
    EigenFailure,
    #[error("conditional weights are degenerate")]
    DegenerateWeights,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("insufficient observations: n = {n} but fitting needs n > p + 2 with p = {p}")]
    InsufficientObservations { n: usize, p: usize },
    #[error("study unstable: {failed} of {total} replicates failed")]
    StudyUnstable { failed: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, MmnError>;
