use std::cell::RefCell;
use std::collections::HashSet;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashSet<usize>)> = RefCell::new((FftPlanner::new(), HashSet::new()));
}

/// Planners cache every size they see; sweeps touch thousands of sizes, so
/// the cache is dropped once it holds this many sizes.
const MAX_CACHED_PLANS: usize = 64;

pub(crate) fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if p.1.insert(n) && p.1.len() > MAX_CACHED_PLANS {
            *p = (FftPlanner::new(), HashSet::from([n]));
        }
        p.0.plan_fft_forward(n)
    })
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Non-negative-frequency bins of the DFT of `x`, optionally windowed.
pub(crate) fn rfft(x: &[f64], window: Option<&[f64]>) -> Vec<Complex<f64>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = match window {
        Some(w) => x
            .iter()
            .zip(w)
            .map(|(&v, &w)| Complex::new(v * w, 0.0))
            .collect(),
        None => x.iter().map(|&v| Complex::new(v, 0.0)).collect(),
    };
    plan(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// `|X_k|²` for bins `0..=n/2`.
pub fn power_spectrum(x: &[f64], window: Option<&[f64]>) -> Vec<f64> {
    rfft(x, window).iter().map(|c| c.norm_sqr()).collect()
}

/// Single-sided amplitude spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpectrum {
    pub frequencies: Vec<f64>,
    /// Peak amplitude of each bin's sinusoid (DC bin: the mean).
    pub magnitudes: Vec<f64>,
}

/// Rectangular-window amplitude spectrum of a record.
pub fn amplitude_spectrum(samples: &[f64], sample_rate: f64) -> AmplitudeSpectrum {
    let n = samples.len();
    let x = rfft(samples, None);
    let frequencies = (0..x.len())
        .map(|k| k as f64 * sample_rate / n as f64)
        .collect();
    let magnitudes = x
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let scale = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            scale * c.norm() / n as f64
        })
        .collect();
    AmplitudeSpectrum {
        frequencies,
        magnitudes,
    }
}

/// Frequency of the strongest non-DC component of `seq`, sampled at `rate`.
///
/// The mean is removed, a Hann window applied and the peak refined by a
/// parabola through the log magnitudes of the three highest bins.
pub fn dominant_frequency(seq: &[f64], rate: f64) -> Option<f64> {
    let n = seq.len();
    if n < 8 {
        return None;
    }
    let mean = seq.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = seq.iter().map(|v| v - mean).collect();
    let p = power_spectrum(&centered, Some(&hann(n)));
    let (k, &peak) = p
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let mut offset = 0.0;
    if k + 1 < p.len() && p[k - 1] > 0.0 && p[k + 1] > 0.0 {
        let (a, b, c) = (p[k - 1].ln(), p[k].ln(), p[k + 1].ln());
        let den = a - 2.0 * b + c;
        if den != 0.0 {
            offset = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        }
    }
    Some((k as f64 + offset) * rate / n as f64)
}
