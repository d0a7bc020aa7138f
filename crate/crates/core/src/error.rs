use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported sample rate {found} Hz (expected {expected} Hz)")]
    UnsupportedSampleRate { found: u32, expected: u32 },
    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelCountMismatch { expected: usize, found: usize },
    #[error("malformed audio file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("clip is silent (pooled RMS {rms:e} below floor)")]
    SilentClip { rms: f64 },
    #[error("recording of {duration_s:.3} s is shorter than the {needed_s:.3} s clip length")]
    RecordingTooShort { duration_s: f64, needed_s: f64 },
    #[error("waveform has {found} samples, expected {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("{found_s:.2} s of empty-room audio, need at least {needed_s:.2} s")]
    InsufficientEmptyAudio { found_s: f64, needed_s: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("value {value} outside [{min}, {max})")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("sin/cos pair has no direction")]
    DegenerateDirection,
    #[error("person position coincides with the robot origin")]
    CoincidentPosition,
    #[error("signal is all zeros")]
    DegenerateSignal,
    #[error("sample has no azimuth label")]
    MissingLabel,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed label: {0}")]
    MalformedLabel(String),
    #[error("dataset has no training samples")]
    EmptyDataset,
    #[error("dataset has no empty-room samples; presence head cannot be trained")]
    NoEmptySamples,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("array geometry missing or invalid: {0}")]
    GeometryMissing(String),
    #[error("need at least 2 rooms for leave-one-out, found {0}")]
    InsufficientRooms(usize),
    #[error("no empty-room profile for room {room_id} ({condition})")]
    MissingEmptyProfile { room_id: String, condition: String },
    #[error("audio source ran dry")]
    SourceUnderrun,
    #[error("pan sink failure: {0}")]
    SinkFailure(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
