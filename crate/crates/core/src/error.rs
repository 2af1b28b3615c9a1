use std::path::PathBuf;

use serde_json::json;

/// Every failure a driftgauge operation can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("bad magic bytes in {0}")]
    BadMagic(PathBuf),
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("payload has {extra} trailing bytes")]
    TrailingBytes { extra: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("sample size {size} exceeds population {population}")]
    SizeExceedsPopulation { size: usize, population: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown slice strategy {0:?}")]
    UnknownStrategy(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient tasks: need at least {needed}, found {found}")]
    InsufficientTasks { needed: usize, found: usize },
    #[error("empty probe set")]
    EmptyProbe,
    #[error("descriptor config digest {found} does not match model digest {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("execution accuracy is undefined: {0}")]
    HookUnavailable(String),
    #[error("record {0} has no gold SQL")]
    MissingGold(usize),

    #[error("per-database cap exceeded for {db_id} ({kind})")]
    CapExceeded { db_id: String, kind: String },
    #[error("budget exhausted: charge of {requested} units would exceed remaining {remaining}")]
    BudgetExhausted { requested: u64, remaining: u64 },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("config parse error: {0}")]
    ParseError(String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid config value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable variant name, used as the `error` field of machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::BadMagic(_) => "BadMagic",
            Error::UnsupportedVersion { .. } => "UnsupportedVersion",
            Error::UnknownDtype(_) => "UnknownDtype",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::TrailingBytes { .. } => "TrailingBytes",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::ManifestMismatch(_) => "ManifestMismatch",
            Error::Io { .. } => "IoFailure",
            Error::Json(_) => "JsonError",
            Error::SizeExceedsPopulation { .. } => "SizeExceedsPopulation",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::UnknownStrategy(_) => "UnknownStrategy",
            Error::InsufficientData(_) => "InsufficientData",
            Error::InsufficientTasks { .. } => "InsufficientTasks",
            Error::EmptyProbe => "EmptyProbe",
            Error::ConfigMismatch { .. } => "ConfigMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Empty(_) => "Empty",
            Error::HookUnavailable(_) => "HookUnavailable",
            Error::MissingGold(_) => "MissingGold",
            Error::CapExceeded { .. } => "CapExceeded",
            Error::BudgetExhausted { .. } => "BudgetExhausted",
            Error::InvalidBounds(_) => "InvalidBounds",
            Error::ParseError(_) => "ParseError",
            Error::UnknownKey(_) => "UnknownKey",
            Error::InvalidValue { .. } => "InvalidValue",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}
