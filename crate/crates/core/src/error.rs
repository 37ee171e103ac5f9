use thiserror::Error;

/// Errors raised by the forward model, the solvers and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point at distance {distance:e} is inside or too close to the imaging domain")]
    SourceInsideDomain { distance: f64 },

    #[error("argument {0} is outside the domain of the function")]
    Domain(f64),

    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("transmitter {transmitter}: {source}")]
    Transmitter {
        transmitter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reconstruction aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        /// Telemetry of the iterations completed before the failure.
        telemetry: Vec<crate::optim::TelemetryRow>,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {path}: {message}")]
    Config { path: String, message: String },

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for Krylov non-convergence, possibly wrapped in a per-transmitter error.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. } => true,
            Error::Transmitter { source, .. } | Error::Aborted { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
