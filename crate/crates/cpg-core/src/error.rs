use thiserror::Error;

#[derive(Debug, Error)]
pub enum CpgError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration failed for phase {phase}: {reason}")]
    Calibration { phase: usize, reason: String },

    #[error("numeric domain error: {0}")]
    Numeric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error in {file} (line {line}): {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CpgError>;

impl CpgError {
    pub fn config(msg: impl Into<String>) -> Self {
        CpgError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CpgError::Numeric(msg.into())
    }

    /// Process exit code class for the CLI: 1 usage/config, 2 calibration, 3 numeric/resource.
    pub fn exit_code(&self) -> i32 {
        match self {
            CpgError::Config(_) | CpgError::Parse { .. } | CpgError::InsufficientData(_) => 1,
            CpgError::Calibration { .. } => 2,
            CpgError::Numeric(_) | CpgError::Io(_) => 3,
        }
    }
}
