use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the recommendation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no interactions")]
    NoInteractions,

    #[error("item {0:?} has no category")]
    MissingCategory(String),

    #[error("item {0:?} listed with more than one category (enable multi-category mode to allow this)")]
    DuplicateCategory(String),

    #[error("invalid hyperedge: {0}")]
    InvalidHyperedge(String),

    #[error("duplicate hyperedge for user {user}, category {category}")]
    DuplicateHyperedge { user: usize, category: usize },

    #[error("vertex {0} is isolated")]
    IsolatedVertex(usize),

    #[error("hyperedge has {0} vertices; at least 2 are needed to leave a vertex")]
    HyperedgeTooSmall(usize),

    #[error("vertex kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: &'static str, got: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("only {accepted} of {wanted} views accepted after {attempts} attempts (acceptance rate {rate:.3})")]
    ViewsExhausted { wanted: usize, accepted: usize, attempts: usize, rate: f64 },

    #[error("did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}, line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}
