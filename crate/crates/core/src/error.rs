use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quadrature did not converge (estimate {estimate:e}, error bound {error_bound:e}){context}")]
    Convergence {
        estimate: f64,
        error_bound: f64,
        context: String,
    },

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("composition count {count} exceeds cap {cap}")]
    TooManyCompositions { count: u64, cap: u64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attaches a location hint to convergence failures; other variants pass through.
    pub fn context(self, what: &str) -> Self {
        match self {
            Error::Convergence {
                estimate,
                error_bound,
                context,
            } => Error::Convergence {
                estimate,
                error_bound,
                context: format!("{context} in {what}"),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
