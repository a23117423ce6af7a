use std::path::PathBuf;

use thiserror::Error;

use crate::task::Task;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {block}: expected width {expected}, got {got}")]
    Shape { block: String, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-binary label {label} at row {row}")]
    NonBinaryLabel { row: usize, label: f64 },
    #[error("loss became NaN at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("missing embedding for {0}")]
    MissingEmbedding(String),
    #[error("unknown topology preset `{name}`; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },
    #[error("graph has {nodes} nodes; enumeration supports at most {max}")]
    GraphTooLarge { nodes: usize, max: usize },
    #[error("node {0} has no gold label")]
    UnlabeledNode(String),
    #[error("embedding width mismatch for task {task}: network gives {network}, graph has {graph}")]
    WidthMismatch { task: Task, network: usize, graph: usize },
    #[error("unknown label `{label}` at {location}")]
    UnknownLabel { label: String, location: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("malformed input at {location}: {message}")]
    Malformed { location: String, message: String },
    #[error("unsupported format: {0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(block: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Shape {
            block: block.into(),
            expected,
            got,
        }
    }
}
