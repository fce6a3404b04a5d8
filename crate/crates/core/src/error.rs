use std::path::PathBuf;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic, bad version, or an otherwise unparseable file.
    #[error("format error: {0}")]
    Format(String),

    /// Header and payload disagree about how many bytes there should be.
    #[error("length error: {0}")]
    Length(String),

    /// A tensor contains NaN or infinite entries.
    #[error("non-finite values: {0}")]
    NonFinite(String),

    /// Incompatible shapes between two arguments.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Bad training/CLI configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
