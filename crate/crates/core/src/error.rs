use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: f64, right: f64 },
    #[error("image source too close to microphone {mic}: {delay_samples:.3} samples of travel (need at least 8)")]
    ImageTooClose { mic: usize, delay_samples: f64 },
    #[error("source {index}: {source}")]
    Source {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("no frame window with sufficient energy in signal `{0}`")]
    SilentSignal(String),
    #[error("frame has zero power")]
    ZeroPower,
    #[error("signal too short: need {needed} samples, have {have}")]
    SignalTooShort { needed: usize, have: usize },
    #[error("corrupt dataset file {path}: {reason}")]
    CorruptDataset { path: PathBuf, reason: String },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
