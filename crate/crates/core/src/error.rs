use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The discrete flow produced a non-finite value or crossed the gradient
    /// blow-up threshold.
    #[error("blow-up at grid index {index:?}, t = {t}: {reason}")]
    Blowup { index: Vec<usize>, t: f64, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
