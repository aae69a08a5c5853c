use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frequency {f_o} Hz outside (0, {max}] Hz")]
    FrequencyOutOfRange { f_o: f64, max: f64 },
    #[error("level {level} exceeds the {max} available modules")]
    LevelOutOfRange { level: i32, max: i32 },
    #[error("amplitude sum {sum} exceeds {limit} levels at t = {time} s")]
    Clipping { sum: f64, limit: f64, time: f64 },
    #[error("frequency {0} Hz is below the analysis resolution")]
    BelowResolution(f64),
    #[error("channel spacing {spacing} Hz is below the spectrogram resolution; window must be at least {required_window} samples")]
    SpectrogramResolution {
        spacing: f64,
        required_window: usize,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
