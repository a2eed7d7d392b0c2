use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: row {row}, column {column}: {message}", file.display())]
    Parse { file: PathBuf, row: usize, column: usize, message: String },

    #[error("{}: {message}", file.display())]
    SchemaMismatch { file: PathBuf, message: String },

    /// `path` is a dotted field path such as `views[2].select.series`.
    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("{stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: condgen::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { path: path.into(), message: message.into() }
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure, 4 for
    /// I/O, 5 for a failed check.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse { .. } | Self::SchemaMismatch { .. } | Self::Config { .. } => 2,
            Self::Numerical { .. } => 3,
            Self::Io { .. } => 4,
            Self::Check(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

/// Tags a library error with the pipeline stage it came from.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Stage<T> for condgen::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Numerical { stage, source })
    }
}
