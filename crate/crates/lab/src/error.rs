use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("heatmap: {0}")]
    Heatmap(String),
    #[error(transparent)]
    Core(#[from] collapse_core::Error),
}

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Errors caused by the caller's input rather than the environment.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Json { .. } | Self::Config(_) | Self::Core(_) | Self::Csv(_))
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

/// Writes `contents` to `path`, creating parent directories.
pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))
}
