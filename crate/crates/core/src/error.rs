use std::path::PathBuf;

use thiserror::Error;

/// Tensor shape or arity violation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Mismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("{op}: empty axis in shape {shape:?}")]
    EmptyAxis { op: &'static str, shape: Vec<usize> },
    #[error("{op}: index {index} out of range for extent {extent}")]
    Index {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("{op}: {values} values do not fill shape {shape:?}")]
    Size {
        op: &'static str,
        values: usize,
        shape: Vec<usize>,
    },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

/// Dataset layout or content problem.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line counts differ: {a} has {a_lines}, {b} has {b_lines}")]
    LineCount {
        a: PathBuf,
        a_lines: usize,
        b: PathBuf,
        b_lines: usize,
    },
    #[error("{path}:{line}: {tokens} tokens but {tags} tags")]
    TokenCount {
        path: PathBuf,
        line: usize,
        tokens: usize,
        tags: usize,
    },
    #[error("{path}:{line}: empty line")]
    EmptyLine { path: PathBuf, line: usize },
    #[error("{path}:{line}: malformed tag {tag:?}")]
    MalformedTag {
        path: PathBuf,
        line: usize,
        tag: String,
    },
    #[error("empty training set")]
    Empty,
    #[error("unknown {kind} label {label:?} (not in the label vocabulary)")]
    UnknownLabel { kind: &'static str, label: String },
    #[error("missing split directory {0}")]
    MissingSplit(PathBuf),
}

/// Malformed IOB tag.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed IOB tag {0:?}")]
pub struct TagError(pub String);

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step} (epoch {epoch}): {loss}")]
    Divergence { step: u64, epoch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("{0}: length mismatch ({1} vs {2})")]
    Alignment(&'static str, usize, usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for the command-line tool: 2 usage/config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::CheckpointVersion { .. } | Error::Checkpoint(_) => 2,
            Error::Corpus(_) | Error::Tag(_) | Error::Alignment(..) | Error::Io { .. } => 3,
            Error::Divergence { .. } | Error::Shape(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
