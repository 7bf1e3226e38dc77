use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants line up with the CLI exit codes: configuration problems map
/// to exit 2, everything data-related to exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("value {value} outside [{min}, {max}) for {what}")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("cannot encode {attribute}: {reason}")]
    Encoding { attribute: String, reason: String },

    #[error("malformed token layout: {0}")]
    Layout(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("empty support after excluding the original token at position {position}")]
    EmptySupport { position: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
