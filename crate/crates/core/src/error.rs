use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid qubit octant {0}")]
    InvalidOctant(u8),

    #[error("states {0} and {1} do not form a SARG04 announcement")]
    InvalidAnnouncement(String, String),

    #[error("measurement outcome {0} is not a basis eigenstate")]
    NotBasisOutcome(String),

    #[error("state {0} is not a diagonal cheat state")]
    NotDiagonal(String),

    #[error("transcript contains positions with an undefined encoded bit")]
    UndefinedBits,

    #[error("transcript carries no inconclusive guesses")]
    NoGuessInformation,

    #[error("raw key length {actual} does not match the scheme (expected {expected})")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("binom({m}, {k}) is smaller than the key length {n}")]
    CombinationSpaceTooSmall { m: usize, k: usize, n: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed {what}: {detail}")]
    Decode { what: &'static str, detail: String },

    #[error("unsupported wire version {0}")]
    VersionMismatch(u8),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn decode(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Decode {
            what,
            detail: detail.into(),
        }
    }
}
