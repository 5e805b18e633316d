use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dataset not found: {0}")]
    DatasetNotFound(PathBuf),
    #[error("layout violation: {path}: {reason}")]
    LayoutViolation { path: PathBuf, reason: String },
    #[error("dataset incomplete: {0}")]
    DatasetIncomplete(String),
    #[error("insufficient references for writer {writer:?}: {have} genuine samples, {need} needed")]
    InsufficientReferences { writer: String, have: usize, need: usize },
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("preprocessing {path}: {source}")]
    Preprocess {
        path: PathBuf,
        #[source]
        source: swis_core::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] swis_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attach a description to IO errors.
pub trait IoContext<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Io {
            context: what(),
            source,
        })
    }
}
