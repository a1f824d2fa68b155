use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("label {label} out of range for {classes} classes (sample {index})")]
    Label { label: usize, classes: usize, index: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    Length { expected: usize, found: usize },

    /// An argument outside the operation's domain, e.g. a parameterless layer
    /// where synaptic weights are required.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    /// Dataset ingestion failure, with byte offset when known.
    #[error("ingestion error in {source_name}{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Ingest { source_name: String, offset: Option<u64>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn ingest(source_name: impl Into<String>, offset: Option<u64>, message: impl Into<String>) -> Self {
        Error::Ingest { source_name: source_name.into(), offset, message: message.into() }
    }
}
