use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("quadrature did not converge: achieved error {achieved:e} against tolerance {tolerance:e}")]
    Numerical { achieved: f64, tolerance: f64 },

    #[error("event at t = {event} is not after the current time t = {current}")]
    Sequencing { event: f64, current: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("worker failure: {0}")]
    Worker(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(message: impl Into<String>) -> Error {
    Error::Parameter(message.into())
}

pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}
