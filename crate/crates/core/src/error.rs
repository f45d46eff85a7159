use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated its documented range or shape.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A caller broke an interface contract (e.g. stepping from t = 0).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Statistical routines refuse samples too small for their asymptotics.
    #[error("sample too small: need at least {min}, got {got}")]
    SampleTooSmall { min: usize, got: usize },

    #[error("training diverged at iteration {iteration}: {reason}")]
    TrainingDiverged { iteration: usize, reason: String },

    /// A checkpoint or dataset was produced under a different noise schedule.
    #[error("schedule hash mismatch: file has {found}, current schedule is {expected}")]
    ScheduleHashMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
