use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("no initial assignment for instance {0}")]
    NoInitialAssignment(String),

    #[error("loss became NaN at epoch {epoch} on sample {sample}")]
    NanLoss { epoch: usize, sample: String },

    #[error("instance {0} missing from best-known table")]
    MissingInstance(String),

    #[error("checkpoint feature_version {found} does not match {expected}")]
    FeatureVersion { expected: u32, found: u32 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("missing artifact {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Short machine-readable tag, used by the command line for one-line errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::InvalidInstance(_) => "invalid-instance",
            Error::InvalidAction(_) => "invalid-action",
            Error::Precondition(_) => "precondition",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Generation(_) => "generation",
            Error::NoInitialAssignment(_) => "no-initial-assignment",
            Error::NanLoss { .. } => "nan-loss",
            Error::MissingInstance(_) => "missing-instance",
            Error::FeatureVersion { .. } => "feature-version",
            Error::Internal(_) => "internal",
            Error::Io { .. } => "missing-artifact",
            Error::Json { .. } => "malformed-file",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
