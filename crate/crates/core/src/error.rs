use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The request or configuration is invalid.
    Config,
    /// Input data is malformed or violates an invariant.
    Data,
    /// A job failed while running.
    Job,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error in {context}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("unknown label code {code:?} (doc {doc}, line {line})")]
    UnknownLabel {
        doc: String,
        line: usize,
        code: String,
    },
    #[error("duplicate annotation by {annotator:?} on sentence {sentence} of doc {doc}")]
    DuplicateAnnotator {
        doc: String,
        sentence: usize,
        annotator: String,
    },
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("ingestion of doc {doc_id} failed: {reason}")]
    Ingestion { doc_id: String, reason: String },
    #[error("override for sentence {sentence} of doc {doc_id}, which already has a strict majority")]
    OverrideOnMajority { doc_id: String, sentence: usize },
    #[error("sentence {sentence} of doc {doc_id} has no gold label")]
    MissingGold { doc_id: String, sentence: usize },
    #[error("split ratios must sum to 1, got {0}")]
    InvalidRatios(f64),
    #[error("need at least {needed} documents, got {got}")]
    TooFewDocuments { needed: usize, got: usize },
    #[error("counts must be non-negative")]
    NegativeCount,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {0:?} is not in the declared label set")]
    LabelOutsideSet(String),
    #[error("kappa undefined: expected agreement is 1 but observed agreement is {0}")]
    KappaUndefined(f64),
    #[error("in-domain baseline F1 must be positive, got {0}")]
    ZeroBaseline(f64),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("leakage: documents {0:?} belong to a held-out or labeled split")]
    Leakage(Vec<String>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("archive error: {0}")]
    Archive(String),
    #[error("encoder error: {0}")]
    Encoder(String),
    #[error("missing label mapping: {0}")]
    MissingMapping(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidRatios(_)
            | Error::Unsupported(_)
            | Error::MissingMapping(_) => ErrorKind::Config,
            // A missing input is the caller's data problem; other i/o
            // failures (full disk, permissions on outputs) fail the job.
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorKind::Data,
            Error::Io { .. } | Error::Encoder(_) | Error::NonFinite(_) => ErrorKind::Job,
            _ => ErrorKind::Data,
        }
    }
}
