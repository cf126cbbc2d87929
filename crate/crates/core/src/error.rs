use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Alignment(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid data: {0}")]
    Format(String),

    #[error("{branch} extractor failed: {source}")]
    Extractor {
        branch: String,
        #[source]
        source: Box<Error>,
    },

    #[error("record {record}: {source}")]
    Record {
        record: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Strips record/extractor wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Extractor { source, .. } | Error::Record { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by invalid inputs or configuration rather
    /// than by the computation itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Alignment(_)
                | Error::Config(_)
                | Error::Contract(_)
                | Error::EmptyMask(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Image(_)
                | Error::Json(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Alignment(_) => "alignment",
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::EmptyMask(_) => "empty_mask",
            Error::Numeric(_) => "numeric",
            Error::Format(_) => "format",
            Error::Candle(_) => "tensor",
            Error::Io(_) => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
            Error::Extractor { .. } | Error::Record { .. } => unreachable!(),
        }
    }

    pub(crate) fn for_record(self, record: &str) -> Error {
        Error::Record {
            record: record.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
