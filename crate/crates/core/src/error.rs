use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("only {accepted} of {requested} compressed models passed the threshold before k reached {k_max}")]
    InsufficientModels {
        accepted: usize,
        requested: usize,
        k_max: usize,
    },

    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooManyClusters { k: usize, distinct: usize },

    #[error("need at least 2 semantic scenes to train a scene encoder, found {0}")]
    TooFewScenes(usize),

    #[error("clip {clip} has {available} test frames, segment needs {needed}")]
    ClipTooShort { clip: u32, available: usize, needed: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema mismatch in sample {sample}: {msg}")]
    Schema { sample: usize, msg: String },

    #[error("hash mismatch for {artifact}: expected {expected}, found {found}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("unsupported {artifact} format version {found} (expected {expected})")]
    Version {
        artifact: &'static str,
        expected: u32,
        found: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
