use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("empty pooled graph")]
    EmptyPooledGraph,

    #[error("permutation is not a bijection on 0..{0}")]
    NotABijection(usize),

    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),

    #[error("degenerate projection vector")]
    DegenerateProjection,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),

    #[error("folds: {0}")]
    Folds(String),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
