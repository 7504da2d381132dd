use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants fall into two families: data errors (malformed files, shape
/// mismatches, corrupted frames) and domain errors (a well-formed request
/// that has no answer, such as an end-effector outside the leg workspace).
/// [`Error::is_domain`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("truncated input while reading {0}")]
    Truncated(&'static str),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("requantization ratio {ratio} does not fit a 31-bit multiplier")]
    RequantOverflow { ratio: f64 },

    #[error("layer {layer}: worst-case accumulator {bound} does not fit in i32")]
    AccumulatorBound { layer: usize, bound: i128 },

    #[error("SQNR is undefined for an all-zero reference signal")]
    ZeroReference,

    #[error("end effector outside workspace: {equation} arcsine argument {argument}")]
    OutOfWorkspace { equation: &'static str, argument: f64 },

    #[error("leg {leg}: {source}")]
    Leg {
        leg: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("underdetermined fit: coefficients {0:?} are not identifiable from the data")]
    Underdetermined(Vec<&'static str>),

    #[error("reward ratio {target} is never reached on this curve")]
    RewardUnreachable { target: f64 },

    #[error("bad sync byte 0x{0:02X}")]
    BadSync(u8),

    #[error("crc mismatch: frame carries 0x{carried:02X}, computed 0x{computed:02X}")]
    BadCrc { carried: u8, computed: u8 },

    #[error("wrong length: expected {expected} bytes, got {got}")]
    WrongLength { expected: usize, got: usize },

    #[error("unknown message type 0x{0:02X}")]
    UnknownType(u8),

    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    /// True for well-formed requests with no answer (out of workspace,
    /// unreachable reward, unidentifiable fit, overflowing ratio).
    pub fn is_domain(&self) -> bool {
        match self {
            Error::OutOfWorkspace { .. }
            | Error::RewardUnreachable { .. }
            | Error::Underdetermined(_)
            | Error::RequantOverflow { .. }
            | Error::AccumulatorBound { .. }
            | Error::ZeroReference => true,
            Error::Leg { source, .. } => source.is_domain(),
            _ => false,
        }
    }
}
