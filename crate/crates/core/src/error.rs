use thiserror::Error;

pub type Result<T, E = FcsError> = std::result::Result<T, E>;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum FcsError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate weights: every likelihood ratio is zero")]
    DegenerateWeights,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<FcsError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FcsError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        FcsError::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        FcsError::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        FcsError::Numeric(msg.into())
    }

    /// True for errors caused by bad configuration or usage rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            FcsError::Domain(_)
                | FcsError::Input(_)
                | FcsError::Config(_)
                | FcsError::Format { .. }
                | FcsError::Unsupported(_)
        )
    }
}
