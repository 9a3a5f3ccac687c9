use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("invalid interval: lo ({lo}) must be below hi ({hi})")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("{op} expects {expected} operands, got {got}")]
    Arity {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },

    #[error("{field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("{field}: unknown node kind `{kind}`")]
    UnknownNodeKind { field: String, kind: String },

    #[error("{field}: mesh file {} not found", path.display())]
    MissingMesh { field: String, path: PathBuf },

    #[error("edge {index} is degenerate (coincident endpoints)")]
    DegenerateEdge { index: usize },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("mesh has no vertices")]
    EmptyMesh,

    #[error("unknown body `{0}`")]
    UnknownBody(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// I/O failures as opposed to rejected input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::MissingMesh { .. })
    }
}
