use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown action index {0}")]
    UnknownAction(usize),
    #[error("unknown action mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("the agent plan is invalid: {0}")]
    InvalidPlan(String),
    #[error("map parse error at line {line}, column {column}: {message}")]
    MapParse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("manifest parse error at line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),
    #[error("state enumeration exceeded the cap of {0} states")]
    StateCap(usize),
    #[error("session error: {0}")]
    Session(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
