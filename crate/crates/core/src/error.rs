use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: line {line}: malformed JSON: {message}", path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("unknown split `{0}`")]
    UnknownSplit(String),

    #[error("document {doc_id} has no label")]
    MissingLabel { doc_id: String },

    #[error("document {doc_id}: label `{label}` is not in the label set")]
    UnknownLabel { doc_id: String, label: String },

    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),

    #[error("sequence has {len} tokens, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("unsupported model version {0}")]
    UnsupportedModelVersion(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("length mismatch: {predictions} predictions vs {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },

    #[error("label `{0}` is not in the label set")]
    UnknownClass(String),

    #[error("no documents for label `{0}`")]
    EmptyGroup(String),

    #[error("no documents")]
    NoDocuments,

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
