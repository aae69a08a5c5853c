//! Classification, distortion and spectral analysis of output records.

mod classify;
mod distortion;
mod spectrogram;
mod spectrum;

pub use classify::{
    classify, dc_bias_metric, lf_oscillation_metric, Category, ClassificationResult, LfMetric,
    Thresholds,
};
pub use distortion::{cycle_distortion, total_distortion, CycleEnergy, DistortionReport};
pub use spectrogram::{spectrogram, spectrogram_with, SpectrogramMatrix, SpectrogramParams};
pub use spectrum::{
    amplitude_spectrum, dominant_frequency, hann, power_spectrum, AmplitudeSpectrum,
};

/// Uniformly sampled voltage or current with its intended frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformRecord {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    /// Intended output frequency (Hz).
    pub f_o: f64,
    /// The samples are a whole number of periods of a strictly periodic
    /// signal, so no window is needed.
    pub periodic: bool,
}

impl WaveformRecord {
    pub fn new(sample_rate: f64, samples: Vec<f64>, f_o: f64) -> Self {
        Self {
            sample_rate,
            samples,
            f_o,
            periodic: false,
        }
    }

    pub fn periodic(sample_rate: f64, samples: Vec<f64>, f_o: f64) -> Self {
        Self {
            sample_rate,
            samples,
            f_o,
            periodic: true,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Number of cycles of `f_o` spanned.
    pub fn cycles(&self) -> f64 {
        self.duration() * self.f_o
    }
}
