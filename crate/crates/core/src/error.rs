use alloc::string::String;

/// Errors produced by the pipeline algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data for {what}: need {required}, got {actual}")]
    InsufficientData {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("duplicate key: {0}")]
    DuplicateKey(String),

    #[error("panel is empty after joining features and targets")]
    EmptyPanel,

    #[error("design matrix is rank deficient")]
    SingularFit,

    #[error("target has a single class")]
    DegenerateTarget,

    #[error("input has zero variance")]
    DegenerateVariance,

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("model carries no cover statistics")]
    ModelNotAnnotated,

    #[error("background sample set is empty")]
    EmptyBackground,
}

pub type Result<T> = core::result::Result<T, Error>;
