use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape violation: {0}")]
    ShapeViolation(String),
    #[error("blank image: intensity histogram has a single class at every threshold")]
    BlankImage,
    #[error("blank signature: no ink pixels at threshold {threshold}")]
    BlankSignature { threshold: u8 },
    #[error("degenerate dimension: column {index} has zero norm")]
    DegenerateDimension { index: usize },
    #[error("invalid temperature {0}: must be > 0")]
    InvalidTemperature(f64),
    #[error("divergence: non-finite gradient at step {step}")]
    Divergence { step: u64 },
    #[error("need >= 2 classes to fit a writer classifier, got {0}")]
    NeedTwoClasses(usize),
    #[error("unknown writer {0:?}")]
    UnknownWriter(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
