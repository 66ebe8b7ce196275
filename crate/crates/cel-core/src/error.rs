//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CelError>;

#[derive(Debug, Error)]
pub enum CelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    BadField {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column {column:?} not found in header")]
    MissingColumn { column: String },

    #[error("dataset has {found} distinct class(es), need at least 2")]
    TooFewClasses { found: usize },

    #[error("bad magic number {got:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, got: u32 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("truncated file: {what}")]
    Truncated { what: String },

    #[error("class {class} is empty")]
    EmptyClass { class: usize },

    #[error("class {class} has {count} sample(s), too few to stratify")]
    ClassTooSmall { class: usize, count: usize },

    #[error("blob mean placement unsatisfiable: {reason}")]
    Placement { reason: String },

    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("confusion score for class {class} is not finite")]
    NonFiniteScore { class: usize },

    #[error("stage {stage} out of range 1..={num_stages}")]
    StageOutOfRange { stage: usize, num_stages: usize },

    #[error("training sample pool is empty")]
    EmptyPool,

    #[error("non-finite loss at stage {stage}, epoch {epoch}: training diverged")]
    Divergence { stage: usize, epoch: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("checkpoint version {got} unsupported (expected {expected})")]
    CheckpointVersion { expected: u32, got: u32 },

    #[error("reports cover different class vocabularies")]
    VocabularyMismatch,

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
