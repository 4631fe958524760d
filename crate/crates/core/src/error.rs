use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A transition whose rate is zero in the current configuration.
    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    /// The integrated density left [0, 1] by more than the allowed slack.
    #[error("density {value} at site {site} left [0, 1] (integrator misuse?)")]
    OutOfRange { site: usize, value: f64 },

    #[error("integrator error estimate {estimate:e} exceeds tolerance {tol:e}")]
    Integrator { estimate: f64, tol: f64 },

    #[error("estimated {estimated:.3e} events exceeds the budget of {budget:.3e}")]
    Budget { estimated: f64, budget: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
