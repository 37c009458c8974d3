use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("click probability is zero; QBER is undefined")]
    DivisionByZero,

    #[error("secure-fraction logarithm undefined at qber {qber}")]
    LogDomain { qber: f64 },

    #[error("no threshold crossing: {0}")]
    NoCrossing(String),

    #[error("click at slot {slot} has no phase (sequence length {len})")]
    IndexOutOfRange { slot: u64, len: u64 },

    #[error("slot count overflow: {0}")]
    Overflow(String),

    #[error("key is empty")]
    EmptyKey,

    #[error("requested {requested} output bits from a {available}-bit key")]
    Length { requested: usize, available: usize },

    #[error("unknown simulation kernel `{0}`")]
    UnknownKernel(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
