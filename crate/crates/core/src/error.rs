use thiserror::Error;

/// Errors produced by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transience check failed: {0}")]
    NotTransient(String),

    #[error("no regeneration observed")]
    NoRegeneration,

    #[error("cycle exceeded the cap of {cap} steps outside the atom (started at index {start})")]
    CycleCap { cap: u64, start: usize },

    #[error("path too short: need {needed} states, have {available}")]
    PathTooShort { needed: usize, available: usize },

    #[error("query level {level} lies below the mark floor {floor}")]
    BelowMarkFloor { level: f64, floor: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("condition not applicable: {0}")]
    NotApplicable(String),

    #[error("moment not certified: {0}")]
    MomentNotCertified(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit code for the command line runner: 3 for runtime guards,
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CycleCap { .. } => 3,
            Error::InvalidParameter(_)
            | Error::SchemaVersion { .. }
            | Error::Json(_)
            | Error::NotTransient(_)
            | Error::BelowMarkFloor { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
