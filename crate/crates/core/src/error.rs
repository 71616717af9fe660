use thiserror::Error;

/// Errors raised by the solver, the analysis routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("history depth insufficient: tail mass {tail:.3e} exceeds {allowed:.3e}")]
    InsufficientHistory { tail: f64, allowed: f64 },

    #[error("history underrun: lag {lag} beyond stored depth {depth}")]
    HistoryUnderrun { lag: f64, depth: f64 },

    #[error("CFL violation: dt^2 * lambda_N * (1 + kappa0) = {value:.4} >= {limit:.4}")]
    Cfl { value: f64, limit: f64 },

    #[error("non-finite state at t = {time}: {what}")]
    NonFinite { time: f64, what: String },

    #[error("time step {dt} does not resolve forcing oscillations (need dt <= {limit})")]
    UnderResolved { dt: f64, limit: f64 },

    #[error("kernel variant mismatch: {0}")]
    KernelMismatch(String),

    #[error("sampling is not uniform: {0}")]
    NonUniformSampling(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }
}
