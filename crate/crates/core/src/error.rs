use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum DmdError {
    /// Operand shapes are incompatible for an operation.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Invalid configuration value or toggle combination.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values or a failed gradient check.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl DmdError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        DmdError::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            DmdError::Config(_) => 1,
            DmdError::Data(_) | DmdError::Io(_) => 2,
            DmdError::Shape { .. } | DmdError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, DmdError>;
