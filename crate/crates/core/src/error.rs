//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },

    #[error("backward called on a tensor with no recorded computation")]
    DetachedGraph,

    #[error("backward already ran for this loss; rebuild the graph before calling it again")]
    BackwardAlreadyRun,

    #[error("attention mask leaves query row {row} with no allowed keys")]
    FullyMaskedRow { row: usize },

    #[error("forward closure is not deterministic: repeated evaluation changed the loss")]
    NonDeterministicClosure,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("variable {name:?} has zero variance in the training split")]
    ZeroStd { name: String },

    #[error("chronological split produced an empty segment")]
    EmptySplit,

    #[error("series too short: need at least {needed} rows, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
