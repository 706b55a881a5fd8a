use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArenaError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },

    #[error("invalid arena: {0}")]
    Semantic(String),

    #[error("random spawn failed after {attempts} attempts")]
    SpawnExhausted { attempts: usize },

    #[error("step called on a terminal episode")]
    SteppedTerminal,

    #[error("lesson index {index} out of range (0..{len})")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T, E = ArenaError> = std::result::Result<T, E>;
