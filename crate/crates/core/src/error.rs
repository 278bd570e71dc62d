use thiserror::Error;

/// Errors raised by the model, solver and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("non-finite value at L = {l:.6}, t = {t:.4}")]
    NonFinite { l: f64, t: f64 },

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("fixed-point iteration did not converge at t = {t:.4} (last update {delta:.3e})")]
    NoConvergence { t: f64, delta: f64 },

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("{aborted} of {total} paths aborted with non-finite state")]
    TooManyAborted { aborted: usize, total: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures produced by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::SingularSystem { .. }
                | Error::NoConvergence { .. }
                | Error::TooManyAborted { .. }
                | Error::IllPosed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
