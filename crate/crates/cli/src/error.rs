use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("missing artifact {path} (run `propdet {stage}` first)")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("split verification failed for {kind}: {detail}")]
    Verification { kind: String, detail: String },

    #[error("{failed} article(s) could not be annotated; first: {first}")]
    Annotation { failed: usize, first: String },

    #[error("{0} grid cell(s) failed; see the record store")]
    GridFailures(usize),

    #[error(transparent)]
    Core(#[from] propdet_core::Error),
}

/// Exit code families, so scripts can tell a bad config from a bad input file or a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    InputData,
    Io,
    Annotator,
    Artifact,
    Split,
    Training,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::InputData => 3,
            ErrorCategory::Io => 4,
            ErrorCategory::Annotator => 5,
            ErrorCategory::Artifact => 6,
            ErrorCategory::Split => 7,
            ErrorCategory::Training => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::InputData => "input",
            ErrorCategory::Io => "io",
            ErrorCategory::Annotator => "annotator",
            ErrorCategory::Artifact => "artifact",
            ErrorCategory::Split => "split",
            ErrorCategory::Training => "training",
        }
    }
}

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        use propdet_core::Error as E;
        match self {
            CliError::Config(_) => ErrorCategory::Config,
            CliError::MissingArtifact { .. } => ErrorCategory::Artifact,
            CliError::Verification { .. } => ErrorCategory::Split,
            CliError::Annotation { .. } => ErrorCategory::Annotator,
            CliError::GridFailures(_) => ErrorCategory::Training,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) => ErrorCategory::Config,
                E::Io { .. } => ErrorCategory::Io,
                E::Network(_) | E::Protocol(_) => ErrorCategory::Annotator,
                E::Parse { .. }
                | E::DuplicateId(_)
                | E::UnknownSource { .. }
                | E::DuplicateSource(_)
                | E::EmptyCorpus
                | E::InvalidArticle { .. }
                | E::InvalidSyntheticSpec(_)
                | E::InvalidRegistry(_)
                | E::TaxonomyMismatch { .. }
                | E::EmptyLexicon
                | E::MalformedEmbeddings(_)
                | E::DimensionMismatch { .. }
                | E::NonFinite(_)
                | E::Json(_) => ErrorCategory::InputData,
                E::Unannotated(_)
                | E::MissingAnnotation
                | E::InputDimension { .. }
                | E::ModeMismatch(_)
                | E::ModelFormat(_)
                | E::FeatureFormat(_)
                | E::LengthMismatch(..)
                | E::IncompleteGrid(_) => ErrorCategory::Artifact,
                E::Split(_) | E::EmptySplit(_) | E::SingleClass => ErrorCategory::Split,
                E::NanLoss { .. } => ErrorCategory::Training,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(propdet_core::Error::Io {
            path: PathBuf::new(),
            source: e,
        })
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
