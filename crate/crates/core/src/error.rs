//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by construction, integration and certification routines.
///
/// Absence of a certificate or a negative detectability verdict is *not* an
/// error; those are ordinary return values.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time order violated: t = {t} < s = {s}")]
    TimeOrder { s: f64, t: f64 },

    #[error("tabulation must cover [0, {period}] (got [{t_first}, {t_last}])")]
    TabulationCoverage { period: f64, t_first: f64, t_last: f64 },

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("linear solve failed: {0}")]
    SingularSolve(String),

    #[error("contour radius {rho} outside the spectral annulus ({delta_bar}, 1)")]
    RhoOutsideAnnulus { rho: f64, delta_bar: f64 },

    #[error("certificate outside proof validity: sqrt(2)*delta = {0} >= 1 requires re-derivation")]
    OutsideProofValidity(f64),

    #[error("Schur iteration failed to converge")]
    SchurFailure,

    #[error("unknown builtin system `{0}`")]
    UnknownSystem(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}
