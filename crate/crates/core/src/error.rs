use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("series length {len} is not a positive multiple of the transform order {order}")]
    NotDivisible { len: usize, order: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("unknown case id {0} (expected 1..=4)")]
    UnknownCase(u8),

    #[error("alphabet is continuous; a superconstellation needs discrete alphabets")]
    NotDiscrete,

    #[error(
        "superconstellation collision at {point}: ({soi_a} + {intf_a}) and ({soi_b} + {intf_b}) \
         decompose to different SOI symbols"
    )]
    Collision {
        point: f64,
        soi_a: f64,
        intf_a: f64,
        soi_b: f64,
        intf_b: f64,
    },

    #[error("window length {window} exceeds series length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("bad magic: not an OFDMSCSS data file")]
    BadMagic,

    #[error("format version mismatch: file has {found}, reader supports {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("data file size mismatch: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("dtype mismatch: manifest says {manifest}, data file size matches {actual}")]
    DtypeMismatch {
        manifest: &'static str,
        actual: &'static str,
    },

    #[error("record index {index} out of range (count {count})")]
    RecordOutOfRange { index: u64, count: u64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
