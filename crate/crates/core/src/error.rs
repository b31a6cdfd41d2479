use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid knots: {0}")]
    InvalidKnots(String),

    #[error("parameter ({u}, {v}) outside surface domain")]
    OutOfDomain { u: f64, v: f64 },

    #[error("knot {value} outside the open support ({lo}, {hi})")]
    KnotOutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("meshline does not split the support of any B-spline")]
    MeshlineSplitsNothing,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("spline collections do not match: {0}")]
    Mismatch(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("contour tracing failed near ({u}, {v}): {reason}")]
    Trace { u: f64, v: f64, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
