use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("image dimensions {height}x{width} not divisible by patch size {patch}")]
    PatchDivisibility {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("pixel value out of range: {0}")]
    PixelRange(f64),

    #[error("encoder '{encoder}' failed: {message}")]
    Encoder { encoder: String, message: String },

    #[error("adapter '{adapter}' violated its shape contract: declared {declared}, observed {observed}")]
    AdapterShape {
        adapter: String,
        declared: String,
        observed: String,
    },

    #[error("unknown adapter '{0}'")]
    UnknownAdapter(String),

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("invalid token sequence: {0}")]
    InvalidTokenSequence(String),

    #[error("manifest validation failed with {} error(s):\n{}", .0.len(), .0.join("\n"))]
    ManifestValidation(Vec<String>),

    #[error("record {id} is missing field '{field}'")]
    MissingField { id: String, field: String },

    #[error("empty no-difference pool with distractor probability {0} > 0")]
    EmptyDistractorPool(f64),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("completion client error: {0}")]
    Client(String),

    #[error("empty evaluation corpus")]
    EmptyCorpus,

    #[error("CIDEr-D needs at least 2 distinct reference documents, got {0}")]
    DegenerateCorpus(usize),

    #[error("correspondence scores missing; threshold subsets need scored pairs")]
    UnscoredPairs,

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("image decode error: {0}")]
    ImageDecode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}
