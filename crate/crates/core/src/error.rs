//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownSlot(String),

    #[error("duplicate subsystem label `{0}`")]
    DuplicateSlot(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not Hermitian (max deviation {dev:.3e}, tolerance {tol:.3e})")]
    NonHermitian { dev: f64, tol: f64 },

    #[error("singular model: {0}")]
    Singular(String),

    #[error("gate is uncalibratable: {0}")]
    Uncalibratable(String),

    #[error("integrator exhausted {max_steps} steps at t = {t:.6e} s (min step {h:.3e} s)")]
    StepLimit { max_steps: usize, t: f64, h: f64 },

    #[error("linear algebra backend failure: {0}")]
    Linalg(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o failure on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
