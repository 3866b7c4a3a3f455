use sunprobit::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("row {row}: unknown label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}, column {column:?}: non-numeric value {value:?}")]
    NonNumericPredictor {
        row: usize,
        column: String,
        value: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("cap exceeded: {0}")]
    Cap(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Cap(_) => 5,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::IndexOutOfRange { .. } => 2,
                CoreError::LabelOutOfRange { .. } => 3,
                CoreError::DimensionTooLarge { .. } | CoreError::QOverCap { .. } => 5,
                _ => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
