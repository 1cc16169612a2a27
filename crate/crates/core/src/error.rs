use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("numerical degeneracy: quadratic form {0:e} is negative")]
    NumericalDegeneracy(f64),

    #[error("empty action set")]
    EmptyActionSet,

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("could not parse backend output: {message}; raw text: {raw:?}")]
    Parse { message: String, raw: String },

    #[error("selected action {0:?} is not among the offered candidates")]
    OutOfCandidate(String),

    #[error("no action could be recognised in response {0:?}")]
    UnparsedChoice(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::ParameterDomain(msg.into())
}
