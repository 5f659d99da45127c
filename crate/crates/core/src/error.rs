use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible signal spec: {0}")]
    InfeasibleSpec(String),

    #[error("{op} is not supported for the {kind} regularizer")]
    Unsupported { op: &'static str, kind: &'static str },

    #[error("restricted injectivity fails: smallest singular value of Φ on T is {sigma_min:e}")]
    NotInjective { sigma_min: f64 },

    #[error("restricted matrix is rank deficient ({rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("no dual certificate: {0}")]
    Infeasible(String),

    #[error(
        "Jacobian system is singular (y lies in the non-injectivity set G): \
         smallest eigenvalue of Φ_T*Φ_T + λQ_T is {min_eig:e}"
    )]
    SingularJacobian { min_eig: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
