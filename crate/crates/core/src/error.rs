use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed record at {location}: {reason}")]
    Malformed { location: String, reason: String },

    #[error("empty flow")]
    EmptyFlow,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),

    #[error("labels not in pool: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),

    #[error("missing centroid for label `{0}`")]
    MissingCentroid(String),

    #[error("class `{class}` has {have} usable samples, need at least {need}")]
    InsufficientSamples {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 config, 2 data, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Training(_) => 3,
            _ => 2,
        }
    }
}
