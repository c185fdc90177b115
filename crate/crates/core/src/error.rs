//! Error type shared by every module of the crate.

use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input value {value} at element {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid quantization parameters: {0}")]
    QParams(String),

    #[error("LFSR state must be non-zero (all-zero is the lock-up state)")]
    LfsrLockup,

    #[error("invalid LFSR configuration: {0}")]
    LfsrConfig(String),

    #[error("theta {0} not supported (expected one of 4, 8, 12, 16)")]
    Theta(usize),

    #[error("sparsity {0}% not supported (expected 0, 25, 50 or 75)")]
    Sparsity(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tile {tile} holds {found} non-zeros, expected {expected}")]
    Imbalance {
        tile: usize,
        found: usize,
        expected: usize,
    },

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("sample rate {found} Hz not accepted, expected {expected} Hz")]
    SampleRate { found: u32, expected: u32 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    Version(u16),

    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for every variant raised while decoding a container.
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::Version(_)
                | Error::Crc { .. }
                | Error::Length(_)
                | Error::Malformed(_)
        )
    }
}
