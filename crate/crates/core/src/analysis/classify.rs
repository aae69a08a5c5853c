use std::fmt;

use serde::{Deserialize, Serialize};

use super::spectrum::{hann, power_spectrum};
use super::WaveformRecord;

/// Decision thresholds for [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Limit on |mean| / (RMS·√2).
    pub dc: f64,
    /// Limit on sub-fundamental power / fundamental power.
    pub lf: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            dc: 0.01,
            lf: 0.001,
        }
    }
}

/// Output behaviour of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Ideal,
    DcBias,
    LfOscillation,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Ideal => "ideal",
            Category::DcBias => "dc-bias",
            Category::LfOscillation => "lf-oscillation",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Sub-fundamental spectral content.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfMetric {
    /// Power in (0, f_o/2), DC excluded, over fundamental power.
    pub ratio: f64,
    /// Frequency of the strongest bin in that band.
    pub peak_frequency: Option<f64>,
    /// The record is too short to resolve the band reliably.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationResult {
    pub category: Category,
    pub dc_metric: f64,
    pub lf_metric: f64,
    pub lf_peak_frequency: Option<f64>,
    pub low_confidence: bool,
    pub thresholds: Thresholds,
}

fn window_for(rec: &WaveformRecord) -> Option<Vec<f64>> {
    (!rec.periodic).then(|| hann(rec.samples.len()))
}

fn dc_with(rec: &WaveformRecord, window: Option<&[f64]>) -> f64 {
    let n = rec.samples.len();
    if n == 0 {
        return 0.0;
    }
    let ms = rec.samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if ms == 0.0 {
        return 0.0;
    }
    // windowed mean for non-periodic records keeps slow components in
    // partial periods from leaking into the estimate
    let mean = match window {
        Some(w) => {
            rec.samples.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / w.iter().sum::<f64>()
        }
        None => rec.samples.iter().sum::<f64>() / n as f64,
    };
    mean / (ms.sqrt() * std::f64::consts::SQRT_2)
}

fn lf_with(rec: &WaveformRecord, window: Option<&[f64]>) -> LfMetric {
    let n = rec.samples.len();
    let empty = LfMetric {
        ratio: 0.0,
        peak_frequency: None,
        low_confidence: true,
    };
    if n < 4 || rec.f_o <= 0.0 {
        return empty;
    }
    let p = power_spectrum(&rec.samples, window);
    let df = rec.sample_rate / n as f64;
    let bin = |f: f64| f / df;
    // main-lobe half width: one bin for exact periods, two under Hann
    let lobe = if window.is_some() { 2 } else { 0 };
    let lo = (bin(0.94 * rec.f_o).ceil() as usize).max(1);
    let hi = (bin(1.06 * rec.f_o).floor() as usize).min(p.len() - 1);
    let pk = if lo <= hi {
        (lo..=hi).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
    } else {
        (bin(rec.f_o).round() as usize).clamp(1, p.len() - 1)
    };
    let fund: f64 = p[pk.saturating_sub(lobe).max(1)..=(pk + lobe).min(p.len() - 1)]
        .iter()
        .sum();
    let first = if window.is_some() { 2 } else { 1 };
    let band_end = (0..p.len())
        .take_while(|&k| (k as f64) * df < rec.f_o / 2.0)
        .count();
    let low_confidence = window.is_some() && (rec.cycles() < 4.0 || pk <= 2 * lobe + first);
    if fund <= 0.0 || band_end <= first {
        return LfMetric {
            ratio: 0.0,
            peak_frequency: None,
            low_confidence,
        };
    }
    let band = &p[first..band_end];
    let ratio = band.iter().sum::<f64>() / fund;
    let peak = band
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, _)| (k + first) as f64 * df);
    LfMetric {
        ratio,
        peak_frequency: peak,
        low_confidence,
    }
}

/// Mean over `RMS·√2`. Non-periodic records use a Hann-weighted mean.
pub fn dc_bias_metric(rec: &WaveformRecord) -> f64 {
    dc_with(rec, window_for(rec).as_deref())
}

/// Power below `f_o/2` (DC excluded) relative to the fundamental.
pub fn lf_oscillation_metric(rec: &WaveformRecord) -> LfMetric {
    lf_with(rec, window_for(rec).as_deref())
}

/// DC bias first, then LF oscillation, otherwise ideal.
pub fn classify(rec: &WaveformRecord, thresholds: Thresholds) -> ClassificationResult {
    let window = window_for(rec);
    let dc = dc_with(rec, window.as_deref());
    let lf = lf_with(rec, window.as_deref());
    let category = if dc.abs() > thresholds.dc {
        Category::DcBias
    } else if lf.ratio > thresholds.lf {
        Category::LfOscillation
    } else {
        Category::Ideal
    };
    ClassificationResult {
        category,
        dc_metric: dc,
        lf_metric: lf.ratio,
        lf_peak_frequency: lf.peak_frequency,
        low_confidence: lf.low_confidence,
        thresholds,
    }
}
