use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or parameters.
    #[error("{0}")]
    Usage(String),

    /// The run completed but `--check` found a disagreement.
    #[error("check failed: {0}")]
    Check(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] tautransit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use tautransit::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Check(_) => 3,
            CliError::Io { .. } => 1,
            CliError::Core(
                E::InvalidParameter(_)
                | E::Format(_)
                | E::NoRoot { .. }
                | E::DivergentMean { .. }
                | E::CoincidentPoint
                | E::UndefinedTangent { .. },
            ) => 2,
            CliError::Core(_) => 1,
        }
    }
}
