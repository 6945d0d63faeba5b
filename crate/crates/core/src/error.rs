use std::io;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("unbound leaf `{0}`")]
    UnboundLeaf(String),
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("graph has not been evaluated")]
    NotEvaluated,
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("record `{id}`: {msg}")]
    Record { id: String, msg: String },
    /// Bad command-line usage that the argument parser cannot see.
    #[error("{0}")]
    Usage(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
