use curiolab_arena::ArenaError;
use curiolab_numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Num(#[from] NumError),

    #[error(transparent)]
    Arena(#[from] ArenaError),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("model is frozen; parameter updates are not allowed")]
    Frozen,

    #[error("missing or unusable model: {0}")]
    MissingModel(String),

    #[error("resolution mismatch: expected {expected:?}, got {got:?}")]
    ResolutionMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("operation requires encoder kind {expected}, got {got}")]
    WrongKind { expected: &'static str, got: &'static str },

    #[error("evaluation window holds {have} of {need} episodes")]
    WindowNotFull { have: usize, need: usize },

    #[error("curriculum complete")]
    CurriculumComplete,

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("config: invalid value for `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },

    #[error("covariance of the features is degenerate")]
    DegenerateCovariance,

    #[error("no run logs to plot")]
    EmptyLog,

    #[error("consistency check failed: {0}")]
    Consistency(String),
}

impl LabError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
