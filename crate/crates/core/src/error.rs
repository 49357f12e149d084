use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("arc length {s} outside curve range [{min}, {max}]")]
    OutOfRange { s: f64, min: f64, max: f64 },

    #[error("no projection of ({x}, {y}) onto the curve within {corridor} m")]
    NoProjection { x: f64, y: f64, corridor: f64 },

    #[error("ambiguous projection of ({x}, {y}): equidistant minima at s = {s_a} and s = {s_b}")]
    AmbiguousProjection { x: f64, y: f64, s_a: f64, s_b: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("QP Hessian is not positive definite")]
    NotPositiveDefinite,

    #[error("QP solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    QpNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("simulation of section '{section}' failed at step {step}: {cause}")]
    SimulationFailed {
        section: String,
        step: usize,
        cause: Box<Error>,
    },

    #[error("invalid section '{id}': {reason}")]
    InvalidSection { id: String, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// True for solver and simulation failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite | Error::QpNotConverged { .. } | Error::Tuning(_) => true,
            Error::SimulationFailed { cause, .. } => cause.is_numerical(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
