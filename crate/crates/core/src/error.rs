use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {0} does not fit the signed encoding range")]
    Overflow(f64),
    #[error("value {value} does not fit in {bits} bits")]
    Range { value: u64, bits: u32 },
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("triple already consumed")]
    TripleReuse,
    #[error("preprocessed material exhausted: {0}")]
    MaskExhausted(&'static str),
    #[error("{got} values exceed the {slots} available slots")]
    SlotOverflow { got: usize, slots: usize },
    #[error("multiplicative depth exhausted")]
    DepthExhausted,
    #[error("ciphertext backend mismatch")]
    BackendMismatch,
    #[error("plaintext-knowledge proof rejected")]
    ProofRejected,
    #[error("decryption failed: {0}")]
    DecryptionFailure(String),
    #[error("malformed wire labels: {0}")]
    MalformedLabels(String),
    #[error("channel error: {0}")]
    Channel(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("connect error: {0}")]
    Connect(String),
    #[error("protocol aborted")]
    Abort,
    #[error("group {0:?} has no samples")]
    EmptyGroup(String),
    #[error("need at least two non-empty groups, found {0}")]
    InsufficientGroups(usize),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
