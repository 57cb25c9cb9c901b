use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("size mismatch: expected {expected} elements, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("orientation is not a proper rotation (det = {det:.6}, max orthogonality error {err:.3e})")]
    NotOrthonormal { det: f64, err: f64 },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("spectrum/attenuation table mismatch: {0}")]
    SpectrumMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot build folds: {0}")]
    Folds(String),

    #[error("png error on {path}: {message}")]
    Png { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
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
