use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("body overflow: {events} events of at least {min_len} steps do not fit in {body} body steps")]
    BodyOverflow {
        events: usize,
        min_len: usize,
        body: usize,
    },
    #[error("state mismatch: generator position {position} but prefix has {width} columns")]
    StateMismatch { position: usize, width: usize },
    #[error("bad interval: {interval} does not divide {steps}")]
    BadInterval { interval: usize, steps: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("code {code} out of range for vocabulary of size {vocab}")]
    CodeOutOfRange { code: u32, vocab: usize },
    #[error("step {step} out of range (1..={max})")]
    StepOutOfRange { step: usize, max: usize },
    #[error("value trace must be detached before building targets")]
    NotDetached,
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("interior cut step {cut} is not a critic-supervised step")]
    ScheduleCriticMismatch { cut: usize },
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("format version mismatch: expected {expected}, found {found}")]
    FormatVersionMismatch { expected: u32, found: u32 },
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Diverged,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::BadInterval { .. }
            | Error::BadSchedule(_)
            | Error::BadRatios(_)
            | Error::ScheduleCriticMismatch { .. }
            | Error::BodyOverflow { .. } => ErrorClass::Config,
            Error::Diverged { .. } => ErrorClass::Diverged,
            _ => ErrorClass::Data,
        }
    }

    /// Short machine-parseable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BodyOverflow { .. } => "BodyOverflow",
            Error::StateMismatch { .. } => "StateMismatch",
            Error::BadInterval { .. } => "BadInterval",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::CodeOutOfRange { .. } => "CodeOutOfRange",
            Error::StepOutOfRange { .. } => "StepOutOfRange",
            Error::NotDetached => "NotDetached",
            Error::Diverged { .. } => "Diverged",
            Error::Degenerate(_) => "Degenerate",
            Error::ScheduleCriticMismatch { .. } => "ScheduleCriticMismatch",
            Error::BadSchedule(_) => "BadSchedule",
            Error::BadRatios(_) => "BadRatios",
            Error::FormatVersionMismatch { .. } => "FormatVersionMismatch",
            Error::CorruptRecord { .. } => "CorruptRecord",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
