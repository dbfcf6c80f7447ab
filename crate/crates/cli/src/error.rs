use cape_core::CapeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing input. Exit code 2.
    #[error("{0}")]
    Input(String),

    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Core(#[from] CapeError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for input and validation problems, 3 when the data make the
    /// requested computation degenerate, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Config { .. } => 2,
            CliError::Core(e) if e.is_computational() => 3,
            CliError::Core(_) => 2,
            CliError::Json(e) if e.is_data() || e.is_syntax() => 2,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
