use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A joint state or action space too large to enumerate.
    #[error("{what} has {size} elements, exceeding the enumeration cap of {cap}")]
    Capacity {
        what: &'static str,
        size: String,
        cap: u128,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Malformed config text, including unknown keys.
    #[error("config error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
