//! Gated multi-channel mixture through the converter.

use super::config::{Config, MixConfig};
use super::multitone::Multitone;
use super::{check_levels, Controller, Recorder, TimeRow};
use crate::analysis::{
    amplitude_spectrum, spectrogram_with, AmplitudeSpectrum, SpectrogramMatrix, WaveformRecord,
};
use crate::converter::{Converter, ConverterStats};
use crate::error::{Error, Result};

/// Spectrum of the constant-channel interval around one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSpectrum {
    pub instant: f64,
    /// Interval bounds (s).
    pub start: f64,
    pub end: f64,
    /// Frequencies of the channels playing in the interval.
    pub active: Vec<f64>,
    /// Output-voltage amplitude spectrum (V).
    pub spectrum: AmplitudeSpectrum,
}

#[derive(Debug, Clone)]
pub struct MixResult {
    pub base_frequency: f64,
    pub scale: f64,
    pub rows: Vec<TimeRow>,
    pub spectrogram: SpectrogramMatrix,
    pub intervals: Vec<IntervalSpectrum>,
    pub stats: ConverterStats,
    /// Base periods whose zero-sum correction hit the level bound.
    pub clamps: u64,
}

pub fn run_mix(cfg: &Config) -> Result<MixResult> {
    check_levels(cfg.controller.levels, cfg.converter.n_modules)?;
    let spec: &MixConfig = &cfg.mix;
    let ctrl = Controller::new(&cfg.controller)?;
    let plan = Multitone::new(&ctrl, &spec.channels, spec.scale, None)?;
    let converter = Converter::new(cfg.converter, cfg.load, ctrl.f_clock)?;
    let mut rec = Recorder::new(converter, spec.time_series_stride, true);
    let clamps = plan.run(&ctrl, |l| rec.step(l).map(|_| ()))?;

    let fs = ctrl.f_clock;
    let tb = 1.0 / plan.base_frequency();
    let k = plan.k_base();
    let active_set = |j: usize| -> Vec<usize> {
        (0..plan.channels.len())
            .filter(|&c| plan.active(c, j))
            .collect()
    };
    let mut intervals = Vec::new();
    for &t in &spec.instants {
        let j = (t / tb).floor() as usize;
        if t < 0.0 || j >= plan.periods() {
            return Err(Error::InvalidParameter(format!(
                "instant {t} s lies outside the plan"
            )));
        }
        let set = active_set(j);
        let mut j0 = j;
        while j0 > 0 && active_set(j0 - 1) == set {
            j0 -= 1;
        }
        let mut j1 = j + 1;
        while j1 < plan.periods() && active_set(j1) == set {
            j1 += 1;
        }
        let mut spectrum = amplitude_spectrum(&rec.voltage[j0 * k..j1 * k], fs);
        if let Some(f_max) = spec.spectrogram.max_frequency {
            let keep = spectrum
                .frequencies
                .iter()
                .take_while(|&&f| f <= f_max)
                .count();
            spectrum.frequencies.truncate(keep);
            spectrum.magnitudes.truncate(keep);
        }
        let mut active: Vec<f64> = set
            .iter()
            .map(|&c| plan.channels[c].spec.frequency)
            .collect();
        active.sort_by(f64::total_cmp);
        active.dedup();
        intervals.push(IntervalSpectrum {
            instant: t,
            start: j0 as f64 * tb,
            end: j1 as f64 * tb,
            active,
            spectrum,
        });
    }

    let voltage = std::mem::take(&mut rec.voltage);
    let spectrogram = spectrogram_with(
        &WaveformRecord::new(fs, voltage, plan.base_frequency()),
        spec.spectrogram,
    )?;
    Ok(MixResult {
        base_frequency: plan.base_frequency(),
        scale: plan.scale(),
        stats: *rec.stats(),
        rows: rec.rows,
        spectrogram,
        intervals,
        clamps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_plan_intervals_show_active_channels() {
        let mut cfg = Config::default();
        cfg.mix.instants = vec![650e-6];
        let r = run_mix(&cfg).unwrap();
        assert_eq!(r.clamps, 0);
        let iv = &r.intervals[0];
        assert!((iv.start - 600e-6).abs() < 1e-12 && (iv.end - 700e-6).abs() < 1e-12);
        assert_eq!(iv.active, vec![10e3, 400e3, 1e6]);
        let s = &iv.spectrum;
        let df = s.frequencies[1];
        let at = |f: f64| s.magnitudes[(f / df).round() as usize];
        // 20 V per level at scale 7/8
        let volts = |a: f64| a * 7.0 / 8.0 * 20.0;
        for (f, a) in [(10e3, 1.0), (400e3, 3.0), (1e6, 4.0)] {
            assert!((at(f) - volts(a)).abs() < 0.1 * volts(a), "{f}: {}", at(f));
        }
        for f in [100e3, 200e3, 3e6, 5e6] {
            assert!(at(f) < 0.05 * volts(1.0), "{f}: {}", at(f));
        }
    }
}
