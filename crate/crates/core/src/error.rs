use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest {}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },

    #[error("dimension mismatch in {} ({subject}): {reason}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        subject: String,
        reason: String,
    },

    #[error("non-finite value in {} at offset {offset}", path.display())]
    NonFinite { path: PathBuf, offset: usize },

    #[error("non-binary annotation in {} at row {row}, column {column}: {value:?}", path.display())]
    NonBinaryAnnotation {
        path: PathBuf,
        row: usize,
        column: usize,
        value: String,
    },

    #[error("malformed csv {} at row {row}: {reason}", path.display())]
    Csv { path: PathBuf, row: usize, reason: String },

    #[error("empty spatial extent")]
    EmptySpatialExtent,

    #[error("label vector has a single class")]
    SingleClass,

    #[error("non-finite feature at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("average precision undefined: no positive labels")]
    NoPositives,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("zero total mass in distribution")]
    ZeroMass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing probe for layer {layer}, concept {concept}")]
    MissingProbe { layer: String, concept: usize },

    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },

    #[error("missing prerequisite for stage {stage}: {what}")]
    MissingPrerequisite { stage: &'static str, what: String },

    #[error("schema error in {}: {reason}", path.display())]
    Schema { path: PathBuf, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
