use thiserror::Error;

/// Errors surfaced by the library. Data errors and numeric aborts are kept
/// distinct so callers (notably the CLI) can map them to stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header in {path}: {detail}")]
    MalformedHeader { path: String, detail: String },

    #[error("non-finite value at sample {sample}, channel {channel}")]
    NonFiniteValue { sample: usize, channel: usize },

    #[error("label {label} out of range for {n_classes} classes (sample {sample})")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("truncated payload in {path}: {detail}")]
    TruncatedPayload { path: String, detail: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("architecture parse error: {0}")]
    ArchParse(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("graph fingerprint mismatch: checkpoint {expected:#018x}, data {actual:#018x}")]
    FingerprintMismatch { expected: u64, actual: u64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
