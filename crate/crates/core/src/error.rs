use thiserror::Error;

/// Errors raised by the library surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("estimator {0} requires an epoch anchor")]
    MissingAnchor(&'static str),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("solver failed at epoch {epoch}, inner step {inner}: {message}")]
    StepFailure {
        epoch: usize,
        inner: usize,
        message: String,
    },

    #[error("planner infeasible ({rule}): {message}")]
    Infeasible { rule: &'static str, message: String },

    #[error("trace is missing stationarity values")]
    MissingStationarity,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        })
    }
}

pub(crate) fn check_finite(what: &'static str, v: &nalgebra::DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
