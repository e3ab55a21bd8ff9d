use hiopf_nlp::NlpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error in section '{section}': {message}")]
    Parse { section: String, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("singular branch {from}-{to}: r = x = 0")]
    SingularBranch { from: usize, to: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: NlpError,
    },
    #[error("{context}: solver stopped with status {status}")]
    SolverStatus { context: String, status: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
