use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("span error in document {document}, mention {mention}: {message}")]
    Span {
        document: String,
        mention: String,
        message: String,
    },

    #[error("invalid dataset: {}", .0.join("; "))]
    InvalidDataset(Vec<String>),

    #[error("malformed row {row} in {file}: {message}")]
    MalformedRow {
        file: String,
        row: usize,
        message: String,
    },

    #[error("empty knowledge base: {0}")]
    EmptyKb(String),

    #[error("duplicate concept id {0}")]
    DuplicateConcept(String),

    #[error("invalid concept {id}: {message}")]
    InvalidConcept { id: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("k must be at least {min}, got {k}")]
    InvalidK { k: usize, min: usize },

    #[error("embedding provider identity mismatch: index built with {index}, query provider is {query}")]
    IdentityMismatch { index: String, query: String },

    #[error("kb_hash mismatch: expected {expected}, found {found}")]
    KbHashMismatch { expected: String, found: String },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("no precomputed vector for text {0:?}")]
    MissingVector(String),

    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },

    #[error("index format error: {0}")]
    IndexFormat(String),

    #[error("mention id mismatch: {0} vs {1}")]
    MentionMismatch(String, String),

    #[error("numerical error: {0}")]
    NonFinite(String),

    #[error("feature version mismatch: model has {model}, scorer expects {expected}")]
    FeatureVersion { model: u32, expected: u32 },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("document mismatch: {0}")]
    DocumentMismatch(String),

    #[error("overlapping mentions in document {0}")]
    OverlappingMentions(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Span { .. } => "span",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::MalformedRow { .. } => "malformed_row",
            Error::EmptyKb(_) => "empty_kb",
            Error::DuplicateConcept(_) => "duplicate_concept",
            Error::InvalidConcept { .. } => "invalid_concept",
            Error::Config(_) => "config",
            Error::InvalidK { .. } => "invalid_k",
            Error::IdentityMismatch { .. } => "identity_mismatch",
            Error::KbHashMismatch { .. } => "kb_hash_mismatch",
            Error::Embedding(_) => "embedding",
            Error::MissingVector(_) => "missing_vector",
            Error::Transport { .. } => "transport",
            Error::IndexFormat(_) => "index_format",
            Error::MentionMismatch(..) => "mention_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::FeatureVersion { .. } => "feature_version",
            Error::EmptyTrainingSet => "empty_training_set",
            Error::DocumentMismatch(_) => "document_mismatch",
            Error::OverlappingMentions(_) => "overlapping_mentions",
        }
    }
}
