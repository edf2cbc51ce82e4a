use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] pgdl_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 3 for data problems, 4 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        use pgdl_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::NonFiniteLoss { .. } | E::NonFiniteGradient { .. } | E::Diff(_) => 4,
                E::Io { .. } | E::Corrupt { .. } | E::Version { .. } => 3,
                E::Shape(_) | E::InvalidArgument(_) => 2,
            },
        }
    }
}
