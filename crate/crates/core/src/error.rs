use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by instance generation, graph traversal and the attacks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("the Kikuchi graph has no edges")]
    EmptyGraph,

    #[error("vertex has out-degree zero")]
    DeadEnd,

    #[error("{what} of size {size} exceeds the configured cap {cap}")]
    Scale { what: &'static str, size: u128, cap: u128 },

    #[error("modulus {0} is not prime; this attack requires a prime modulus")]
    UnsupportedModulus(u32),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
