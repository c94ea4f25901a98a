use alloc::string::String;

/// Errors produced by the retrieval core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{count} non-finite value(s), first at flat index {first_index}")]
    NonFinite { count: usize, first_index: usize },

    #[error("invalid {field}: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },

    #[error(
        "noise covariance is not positive definite (Cholesky pivot {pivot} = {value:e}); \
         increase the noise ridge"
    )]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error(
        "design matrix is rank deficient at column {column}; \
         refit with a positive ridge"
    )]
    RankDeficient { column: usize },

    #[error(
        "joint correlation matrix is singular; increase the shrinkage toward identity \
         (currently {shrinkage:e})"
    )]
    SingularCorrelation { shrinkage: f64 },

    #[error("operation requires a {expected} basis, got {found}")]
    WrongMethod {
        expected: &'static str,
        found: &'static str,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
