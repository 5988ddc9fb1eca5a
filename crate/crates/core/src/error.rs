use std::path::PathBuf;

use thiserror::Error;

use crate::motor_model::FaultClass;

pub type Result<T> = std::result::Result<T, SgdaError>;

#[derive(Debug, Error)]
pub enum SgdaError {
    #[error("invalid motor parameters: {0}")]
    InvalidMotor(String),
    #[error("healthy class has no signature")]
    HealthyHasNoSignature,
    #[error("{0} requires explicit frequencies")]
    RequiresExplicitFrequencies(FaultClass),
    #[error("no samples in {0}")]
    NoSamples(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("recording too short: {len} samples for window of {window}")]
    RecordingTooShort { len: usize, window: usize },
    #[error("window too short for truncation: {len} bins, need {needed}")]
    TruncationTooShort { len: usize, needed: usize },
    #[error("frequency outside truncated band: {freq_hz} Hz maps to bin {bin}")]
    OutsideBand { freq_hz: f64, bin: usize },
    #[error("segment centered at bin {center} does not fit in {n_bins} bins")]
    SegmentOutOfBand { center: usize, n_bins: usize },
    #[error("every signature frequency of {0} falls outside the usable band")]
    SignatureOutOfBand(FaultClass),
    #[error("signature frequency {freq_hz} Hz is above Nyquist ({nyquist_hz} Hz)")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },
    #[error("degenerate generator: {accepted} of {requested} peaks after {draws} draws")]
    DegenerateGenerator {
        requested: usize,
        accepted: usize,
        draws: usize,
    },
    #[error("data leakage: recording `{0}` appears in both train and test")]
    DataLeakage(String),
    #[error("label {0} is not in the model's class set")]
    UnknownLabel(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Neural(#[from] sgda_neural::NeuralError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
