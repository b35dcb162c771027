use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] micshift_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| Self::Json { path, source }
    }

    pub(crate) fn format(format: &'static str, detail: impl Into<String>) -> Self {
        Self::Format {
            format,
            detail: detail.into(),
        }
    }

    /// Stable machine-readable category for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Core(micshift_core::Error::Diverged { .. }) => "diverged",
            Self::Core(_) => "core",
            Self::Io { .. } => "io",
            Self::Json { .. } => "json",
            Self::Format { .. } => "format",
            Self::Wav(_) => "wav",
            Self::Csv(_) => "csv",
            Self::Config(_) => "config",
        }
    }
}
