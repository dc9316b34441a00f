use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HitError {
    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("interest exceeded blowup cap at step {step} (|I| = {value:e})")]
    BlowupDetected { step: usize, value: f64 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("empty bounds for {param}: lo = {lo}, hi = {hi}")]
    EmptyBounds { param: String, lo: f64, hi: f64 },
    #[error("schedule entry {label:?} ({date}) lies outside the observation grid")]
    ScheduleOutOfRange { label: String, date: String },
    #[error("schedule dates are not strictly increasing at entry {label:?}")]
    UnsortedSchedule { label: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dates are not increasing at line {line}")]
    NonMonotonicDates { line: usize },
    #[error("negative value at line {line}")]
    NegativeCount { line: usize },
    #[error("missing data on {date}{}", channel.as_ref().map(|c| format!(" (channel {c:?})")).unwrap_or_default())]
    MissingData {
        date: String,
        channel: Option<String>,
    },
    #[error("duplicate row for channel {channel:?} on {date} (line {line})")]
    DuplicateChannelDate {
        channel: String,
        date: String,
        line: usize,
    },
    #[error("series date ranges do not overlap on at least two days")]
    NoOverlap,
    #[error("grid has {size} points, cap is {cap}")]
    GridTooLarge { size: u128, cap: u128 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HitError {
    /// Stable machine-readable code, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            HitError::DimensionMismatch { .. } => "DimensionMismatch",
            HitError::BlowupDetected { .. } => "BlowupDetected",
            HitError::InvalidWindow(_) => "InvalidWindow",
            HitError::EmptyBounds { .. } => "EmptyBounds",
            HitError::ScheduleOutOfRange { .. } => "ScheduleOutOfRange",
            HitError::UnsortedSchedule { .. } => "UnsortedSchedule",
            HitError::Parse { .. } => "ParseError",
            HitError::NonMonotonicDates { .. } => "NonMonotonicDates",
            HitError::NegativeCount { .. } => "NegativeCount",
            HitError::MissingData { .. } => "MissingData",
            HitError::DuplicateChannelDate { .. } => "DuplicateChannelDate",
            HitError::NoOverlap => "NoOverlap",
            HitError::GridTooLarge { .. } => "GridTooLarge",
            HitError::InvalidInput(_) => "InvalidInput",
            HitError::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HitError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HitError> = std::result::Result<T, E>;
