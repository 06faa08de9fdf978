use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a formula (e.g. a non-positive density).
    #[error("domain error: {0}")]
    Domain(String),

    /// A named configuration field failed validation.
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    /// The physical configuration is inconsistent as a whole.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical kernel failed where the theory guarantees success.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Reading the configuration or writing results failed.
    #[error("i/o error: {0}")]
    Io(String),

    /// Time integration left the representable range before the horizon.
    #[error("horizon error: {reason}")]
    Horizon {
        reason: String,
        partial_rate: Option<f64>,
    },
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidField { .. } | Error::Config(_) | Error::Domain(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
