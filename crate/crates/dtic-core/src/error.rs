use thiserror::Error;

/// Crate-wide error type. Every failure carries enough context to act on it
/// without a debugger: parse errors name the input line, shape errors name
/// the graph node, numeric failures name the offending loss term.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("shape mismatch in {node}: {message}")]
    Shape { node: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn shape(node: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Shape { node: node.into(), message: msg.into() }
    }

    /// Process exit code contract: 2 for anything the caller can fix in the
    /// inputs, 3 for numeric blow-ups during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
