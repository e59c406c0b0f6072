use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, bad tolerance, grid outside span).
    #[error("input error: {0}")]
    Input(String),

    /// Argument outside the mathematical domain of an operation (e.g. `t <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration file failed validation; `field` names the offending entry.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// The integrator could not continue; carries the last accepted state.
    #[error("integration failed at t = {t}: {message}")]
    Integration {
        t: f64,
        x: Vec<f64>,
        v: Vec<f64>,
        message: String,
    },

    /// Rational interpolation of parameter dependence failed.
    #[error("reconstruction error: {0}")]
    Reconstruction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
