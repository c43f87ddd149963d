use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stem_core::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read config {path}: {detail}")]
    ConfigFile { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for data and I/O, 4 for numerics.
    pub fn exit_code(&self) -> i32 {
        use stem_core::Error as E;
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Config(_) => 2,
                E::Numeric { .. } | E::UndefinedMetric(_) => 4,
                E::Shape { .. } | E::Bounds { .. } | E::Parse { .. } | E::EmptyInput(_) | E::Io { .. } => 3,
            },
        }
    }
}
