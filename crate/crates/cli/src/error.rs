use thiserror::Error;

/// Exit status for runtime failures (I/O, corrupt files, diverged training).
pub const EXIT_RUNTIME: i32 = 1;
/// Exit status for usage and validation errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pbgc::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use pbgc::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                E::InvalidConfig(_)
                | E::Spec { .. }
                | E::ShapeMismatch { .. }
                | E::ModeMismatch { .. }
                | E::CardinalityMismatch { .. }
                | E::AngleOutOfRange { .. }
                | E::IndexOutOfRange { .. }
                | E::BatchTooSmall(_)
                | E::EmptyDataset
                | E::ResourceLimit { .. } => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            },
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => EXIT_RUNTIME,
        }
    }
}
