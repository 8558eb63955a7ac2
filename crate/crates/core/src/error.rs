use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("numerical failure at t={t}: {reason}")]
    NumericalFailure { t: f64, reason: String },

    #[error("degenerate weights at t={t}: agent {agent} has weight {value:e} below floor")]
    DegenerateWeights { t: f64, agent: usize, value: f64 },

    #[error("trajectory left the validity box at t={t} (agent {agent})")]
    OutsideValidityBox { t: f64, agent: usize },

    #[error("fit unavailable: {0}")]
    FitUnavailable(String),

    #[error("unknown scenario '{name}'; available: {}", available.join(", "))]
    UnknownScenario { name: String, available: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    /// Short machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Capability(_) => "capability",
            Error::NumericalFailure { .. } => "numerical-failure",
            Error::DegenerateWeights { .. } => "degenerate-weights",
            Error::OutsideValidityBox { .. } => "outside-validity-box",
            Error::FitUnavailable(_) => "fit-unavailable",
            Error::UnknownScenario { .. } => "unknown-scenario",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
