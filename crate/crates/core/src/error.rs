use thiserror::Error;

/// Errors raised by the generators, impact models and estimators.
///
/// Each variant maps onto one exit-code family of the command-line tool
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: invalid parameter: {message}")]
    Parameter {
        module: &'static str,
        message: String,
    },

    #[error("{module}: invalid input: {message}")]
    Input {
        module: &'static str,
        message: String,
    },

    #[error("{module}: estimation failed: {message}")]
    Estimation {
        module: &'static str,
        message: String,
    },

    #[error("{module}: numeric failure at step {step}: {message}")]
    Numeric {
        module: &'static str,
        step: usize,
        message: String,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: u64, message: String },

    #[error("search space of {size} candidates exceeds the budget of {budget}")]
    Budget { size: u128, budget: u64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(module: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn input(module: &'static str, message: impl Into<String>) -> Self {
        Error::Input {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn estimation(module: &'static str, message: impl Into<String>) -> Self {
        Error::Estimation {
            module,
            message: message.into(),
        }
    }

    /// Exit code family: 1 usage/config, 2 input format, 3 estimation/numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter { .. } | Error::Config(_) | Error::Budget { .. } => 1,
            Error::Input { .. } | Error::Format { .. } | Error::Csv(_) | Error::Json(_) => 2,
            Error::Io(_) => 2,
            Error::Estimation { .. } | Error::Numeric { .. } => 3,
        }
    }
}
