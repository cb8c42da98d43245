use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] seqmult::Error),
    #[error("{path}: row {row}: {message}")]
    Rounds {
        path: String,
        row: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 2 invalid input, 3 sampler did not converge, 4 the
    /// requested simulation cannot be generated, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use seqmult::Error as E;
        match self {
            CliError::Core(E::NonConvergence { .. }) => 3,
            CliError::Core(E::Infeasible(_) | E::SupportTooTight { .. }) => 4,
            CliError::Core(
                E::InvalidParameter(_)
                | E::DimensionMismatch(_)
                | E::InconsistentBatch { .. }
                | E::Boundary { .. }
                | E::InvalidDof { .. }
                | E::Empty(_),
            ) => 2,
            CliError::Core(_) => 1,
            CliError::Rounds { .. } | CliError::Config { .. } | CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }
}
