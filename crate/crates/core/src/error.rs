use std::io;

use thiserror::Error;

use crate::profile::Diagnostic;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic {found:?}, expected \"CCAP\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported CCAP version {0}")]
    UnsupportedVersion(u32),

    #[error("reserved flag bits set: {0:#x}")]
    ReservedFlags(u32),

    #[error("truncated profile: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing bytes after profile: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },

    #[error("dimension overflow: {0}")]
    DimensionOverflow(&'static str),

    #[error("invalid profile: {}", join_diagnostics(.0))]
    InvalidProfile(Vec<Diagnostic>),

    #[error("profile has no {0} block")]
    MissingBlock(&'static str),

    #[error("sample index {index} out of range for pool of {num_samples}")]
    SampleOutOfRange { index: usize, num_samples: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid coverage matrix: {0}")]
    InvalidCoverage(String),

    #[error("enumeration of {subsets} subsets exceeds cap of {cap}")]
    EnumerationCap { subsets: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
