use thiserror::Error;

pub type Result<T, E = DkError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DkError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical abort at step {step} (t = {time}): {reason}")]
    NumericalAbort { step: usize, time: f64, reason: String },

    #[error("time-grid mismatch: {0}")]
    TimeGridMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DkError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        DkError::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        DkError::Config(msg.into())
    }

    /// Stable short tag for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            DkError::InvalidGrid(_) => "invalid_grid",
            DkError::GridMismatch { .. } => "grid_mismatch",
            DkError::InvalidArgument(_) => "invalid_argument",
            DkError::Precondition(_) => "precondition",
            DkError::Config(_) => "config",
            DkError::NumericalAbort { .. } => "numerical_abort",
            DkError::TimeGridMismatch(_) => "time_grid_mismatch",
            DkError::Format(_) => "format",
            DkError::Io(_) => "io",
        }
    }
}
