use thiserror::Error;

/// Errors produced by every stage of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("Cout={cout} is not a multiple of d={d}")]
    CoutNotMultipleOfD { cout: usize, d: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid N:M pattern {n}:{m} (need 0 < N <= M <= 64)")]
    InvalidPattern { n: usize, m: usize },

    #[error("d={d} is not a multiple of M={m}")]
    DNotMultipleOfM { d: usize, m: usize },

    #[error("chunk {chunk} has {found} kept entries, expected {expected}")]
    InvalidPopcount {
        chunk: usize,
        found: usize,
        expected: usize,
    },

    #[error("mask id {id} out of range (table has {count} entries)")]
    IdOutOfRange { id: u64, count: u64 },

    #[error("{rows} subvectors cannot seed {k} codewords")]
    TooFewSubvectors { rows: usize, k: usize },

    #[error("quantization bits must be in 2..=16, got {0}")]
    InvalidBits(u32),

    #[error("assignment {index} out of range for a codebook of {k} codewords")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad magic, not an MVQ1 container")]
    BadMagic,

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated stream: needed {needed} bytes, {available} available")]
    TruncatedStream { needed: u64, available: u64 },

    #[error("corrupt lengths: {0}")]
    CorruptLengths(String),

    #[error("invalid layer record: {0}")]
    InvalidLayer(String),

    #[error("non-canonical encoding: {0}")]
    NonCanonical(String),

    #[error("invalid accelerator config: {0}")]
    ConfigInvalid(String),

    #[error("Q = N/M * d is not integral for {n}:{m}, d={d}")]
    QNotIntegral { n: usize, m: usize, d: usize },

    #[error("mask has {found} set bits, expected {expected}")]
    WrongPopcount { found: usize, expected: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
