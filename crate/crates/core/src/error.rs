use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("render aux does not match inputs: {0}")]
    AuxMismatch(String),

    #[error("ply parse error at byte {offset}: {message}")]
    Ply { offset: u64, message: String },

    #[error("camera file error at {path}: {message}")]
    Cameras { path: String, message: String },

    #[error("config error at {key}: {message}")]
    Config { key: String, message: String },

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch { expected: expected.to_string(), got: got.to_string() }
    }
}
