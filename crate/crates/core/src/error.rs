use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("exploration left the working box (half-width {half_width})")]
    BoxOverflow { half_width: i64 },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("rejection sampler gave up after {attempts} attempts")]
    AttemptsExhausted { attempts: u64 },

    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("no crossing in bracket [{lo}, {hi}]: {detail}")]
    NoCrossing { lo: f64, hi: f64, detail: String },

    #[error("malformed graph sample: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Format(e.to_string())
    }
}
