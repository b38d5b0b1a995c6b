use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("region `{region}` is not aligned with the mesh along the {axis} axis")]
    Misaligned { region: String, axis: char },

    #[error("degenerate element {element}: non-positive Jacobian determinant {det_j:e}")]
    Geometry { element: usize, det_j: f64 },

    #[error("iteration {iteration} out of range (schedule has {total} iterations)")]
    OutOfRange { iteration: usize, total: usize },

    #[error("filter used before its operator was assembled")]
    FilterState,

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("optimization iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: SolverError,
    },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

/// Failures of the linear and nonlinear solvers.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("linear solver did not converge in {iterations} iterations (relative residual {relative_residual:e})")]
    LinearNotConverged { iterations: usize, relative_residual: f64 },

    #[error("linear solver breakdown: {0}")]
    Breakdown(String),

    #[error("Newton did not converge after {iterations} iterations (residual {residual:e}, target {target:e})")]
    NewtonNotConverged {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("heat-source ramp failed at stage {stage} (scale {scale:e}): {reason}")]
    RampFailed { stage: usize, scale: f64, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
