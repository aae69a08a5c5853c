use serde::{Deserialize, Serialize};

use super::spectrum::{hann, plan};
use super::WaveformRecord;
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;

/// Short-time Fourier transform settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrogramParams {
    pub window_len: usize,
    pub hop: usize,
    /// Bins above this frequency are dropped.
    pub max_frequency: Option<f64>,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            window_len: 4096,
            hop: 2048,
            max_frequency: None,
        }
    }
}

/// Hann-windowed STFT magnitudes in dB of sinusoid amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramMatrix {
    /// Frame centres (s).
    pub times: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// `magnitudes[frame][bin]`.
    pub magnitudes: Vec<Vec<f64>>,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
}

const FLOOR_DB: f64 = -240.0;

impl SpectrogramMatrix {
    /// Linear amplitude of one cell.
    pub fn amplitude(&self, frame: usize, bin: usize) -> f64 {
        10f64.powf(self.magnitudes[frame][bin] / 20.0)
    }

    /// Index of the bin nearest `f`.
    pub fn bin_of(&self, f: f64) -> usize {
        let df = self.sample_rate / self.window_len as f64;
        ((f / df).round() as usize).min(self.frequencies.len().saturating_sub(1))
    }

    /// First sample covered by a frame.
    pub fn frame_start(&self, frame: usize) -> usize {
        frame * self.hop
    }

    /// Frequency of the strongest bin in a frame.
    pub fn ridge(&self, frame: usize) -> f64 {
        let row = &self.magnitudes[frame];
        let k = (0..row.len())
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .unwrap_or(0);
        self.frequencies[k]
    }
}

/// Full-band spectrogram.
pub fn spectrogram(
    rec: &WaveformRecord,
    window_len: usize,
    hop: usize,
) -> Result<SpectrogramMatrix> {
    spectrogram_with(
        rec,
        SpectrogramParams {
            window_len,
            hop,
            max_frequency: None,
        },
    )
}

pub fn spectrogram_with(rec: &WaveformRecord, p: SpectrogramParams) -> Result<SpectrogramMatrix> {
    let n = rec.samples.len();
    if p.window_len < 2 || p.hop == 0 || p.window_len > n {
        return Err(Error::InvalidParameter(format!(
            "spectrogram window {} / hop {} invalid for {} samples",
            p.window_len, p.hop, n
        )));
    }
    let w = hann(p.window_len);
    let gain = 2.0 / w.iter().sum::<f64>();
    let df = rec.sample_rate / p.window_len as f64;
    let mut bins = p.window_len / 2 + 1;
    if let Some(fmax) = p.max_frequency {
        bins = bins.min((fmax / df).floor() as usize + 1);
    }
    let frequencies: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
    let fft = plan(p.window_len);
    let frames = (n - p.window_len) / p.hop + 1;
    let mut times = Vec::with_capacity(frames);
    let mut magnitudes = Vec::with_capacity(frames);
    let mut buf = vec![Complex::new(0.0, 0.0); p.window_len];
    for f in 0..frames {
        let start = f * p.hop;
        for (b, (&x, &wv)) in buf
            .iter_mut()
            .zip(rec.samples[start..start + p.window_len].iter().zip(&w))
        {
            *b = Complex::new(x * wv, 0.0);
        }
        fft.process(&mut buf);
        times.push((start as f64 + p.window_len as f64 / 2.0) / rec.sample_rate);
        magnitudes.push(
            buf[..bins]
                .iter()
                .map(|c| {
                    let a = c.norm() * gain;
                    if a > 0.0 {
                        (20.0 * a.log10()).max(FLOOR_DB)
                    } else {
                        FLOOR_DB
                    }
                })
                .collect(),
        );
    }
    Ok(SpectrogramMatrix {
        times,
        frequencies,
        magnitudes,
        window_len: p.window_len,
        hop: p.hop,
        sample_rate: rec.sample_rate,
    })
}
