use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("window [{start}, {end}) s lies outside the run [{t0}, {t_end}) s")]
    WindowOutOfRange { start: f64, end: f64, t0: f64, t_end: f64 },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("unstable surrogate: {0}")]
    Unstable(String),

    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch { what: String, expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("mask-mismatch: weights trained on sensors {trained:?}, got {given:?}")]
    MaskMismatch { trained: Vec<usize>, given: Vec<usize> },

    #[error("degenerate normalizer: truth has zero {0}")]
    DegenerateNormalizer(&'static str),

    #[error("missing condition {0}")]
    MissingCondition(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error("config has {} error(s): {}", .0.len(), .0.join("; "))]
    Config(Vec<String>),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam { field: field.into(), reason: reason.into() }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::WindowOutOfRange { .. } => "range",
            Error::InvalidParam { .. } => "invalid-param",
            Error::Unstable(_) => "unstable",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::Empty(_) => "empty",
            Error::MaskMismatch { .. } => "mask-mismatch",
            Error::DegenerateNormalizer(_) => "degenerate-normalizer",
            Error::MissingCondition(_) => "missing-condition",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
