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

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate article id {0:?}")]
    DuplicateId(String),

    #[error("article {article:?} references unknown source {source_name:?}")]
    UnknownSource { article: String, source_name: String },

    #[error("duplicate source metadata for {0:?}")]
    DuplicateSource(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid article {id:?}: {reason}")]
    InvalidArticle { id: String, reason: String },

    #[error("invalid synthetic spec: {0}")]
    InvalidSyntheticSpec(String),

    #[error("invalid registry: {0}")]
    InvalidRegistry(String),

    #[error("label {label:?} is not in the technique registry ({kind})")]
    TaxonomyMismatch { kind: &'static str, label: String },

    #[error("annotator network error: {0}")]
    Network(String),

    #[error("annotator protocol error: {0}")]
    Protocol(String),

    #[error("lexicon set is empty")]
    EmptyLexicon,

    #[error("article {0:?} has no annotation")]
    Unannotated(String),

    #[error("embedding file: {0}")]
    MalformedEmbeddings(String),

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in embedding for token {0:?}")]
    NonFinite(String),

    #[error("hybrid feature mode requires an annotation")]
    MissingAnnotation,

    #[error("input has {found} features, model expects {expected}")]
    InputDimension { expected: usize, found: usize },

    #[error("feature mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("feature matrix: {0}")]
    FeatureFormat(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset needs both classes present")]
    SingleClass,

    #[error("empty dataset split: {0}")]
    EmptySplit(&'static str),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NanLoss { epoch: usize, step: usize },

    #[error("split: {0}")]
    Split(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("incomplete grid: missing {0:?}")]
    IncompleteGrid(Vec<String>),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
