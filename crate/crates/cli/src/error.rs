use thiserror::Error;

use sdgame_core::ErrorClass;

/// Exit codes: 0 ok, 2 malformed game file or usage, 3 emptiness or no value, 4 numeric guard, 5 I/O.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_NO_VALUE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}:{line}: {message}")]
    Spec { file: String, line: usize, message: String },
    #[error("{file}: missing section [{section}]")]
    MissingSection { file: String, section: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sdgame_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec { .. } | CliError::MissingSection { .. } | CliError::Usage(_) => EXIT_SPEC,
            CliError::Core(e) => match e.class() {
                ErrorClass::Spec => EXIT_SPEC,
                ErrorClass::Emptiness => EXIT_NO_VALUE,
                ErrorClass::NumericGuard => EXIT_NUMERIC,
            },
            CliError::Io { .. } | CliError::Json { .. } | CliError::Csv(_) => EXIT_IO,
        }
    }
}
