//! Exponential frequency sweep through the converter.

use super::config::{ChirpConfig, Config};
use super::{check_levels, Controller, Recorder, TimeRow};
use crate::analysis::{
    cycle_distortion, spectrogram_with, CycleEnergy, SpectrogramMatrix, WaveformRecord,
};
use crate::converter::{Converter, ConverterStats};
use crate::error::{Error, Result};
use crate::modulation::AdaptiveNlm;
use crate::synth::LutMethod;

/// Instantaneous frequency `f_start·(f_end/f_start)^(t/T)`.
pub fn chirp_frequency(spec: &ChirpConfig, t: f64) -> f64 {
    spec.f_start * (spec.f_end / spec.f_start).powf(t / spec.duration)
}

/// Distortion and balance over a run of whole output cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionWindow {
    pub start: f64,
    pub end: f64,
    pub cycles: usize,
    /// Mean output frequency, cycles per second of the window.
    pub frequency: f64,
    pub voltage_distortion: f64,
    pub current_distortion: f64,
    /// Peak of the current fundamental (A).
    pub current_amplitude: f64,
    /// Largest relative module deviation from the module mean.
    pub max_spread: f64,
}

#[derive(Debug, Clone)]
pub struct ChirpResult {
    pub rows: Vec<TimeRow>,
    pub windows: Vec<DistortionWindow>,
    pub spectrogram: SpectrogramMatrix,
    pub stats: ConverterStats,
    /// Largest commanded |level| times the module voltage.
    pub commanded_peak: f64,
    /// Largest |v_out| the converter actually produced.
    pub measured_peak: f64,
    pub cycles: u64,
    pub clamps: u64,
}

impl ChirpResult {
    pub fn max_voltage_distortion(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| w.voltage_distortion)
            .fold(0.0, f64::max)
    }

    pub fn mean_voltage_distortion(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| w.voltage_distortion)
            .sum::<f64>()
            / self.windows.len().max(1) as f64
    }
}

struct WindowAcc {
    start: f64,
    clocks: usize,
    cycles: usize,
    voltage: Vec<CycleEnergy>,
    current: Vec<CycleEnergy>,
    spread: f64,
}

impl WindowAcc {
    fn new(start: f64) -> Self {
        Self {
            start,
            clocks: 0,
            cycles: 0,
            voltage: Vec::new(),
            current: Vec::new(),
            spread: 0.0,
        }
    }

    fn finish(&self, dt: f64) -> DistortionWindow {
        let v = CycleEnergy::report(&self.voltage, self.clocks);
        let i = CycleEnergy::report(&self.current, self.clocks);
        let span = self.clocks as f64 * dt;
        DistortionWindow {
            start: self.start,
            end: self.start + span,
            cycles: self.cycles,
            frequency: self.cycles as f64 / span,
            voltage_distortion: v.total_distortion,
            current_distortion: i.total_distortion,
            current_amplitude: i.fundamental_rms * std::f64::consts::SQRT_2,
            max_spread: self.spread,
        }
    }
}

pub fn run_chirp(cfg: &Config) -> Result<ChirpResult> {
    check_levels(cfg.controller.levels, cfg.converter.n_modules)?;
    let spec = &cfg.chirp;
    let ctrl = Controller::new(&cfg.controller)?;
    if !(spec.f_start > 0.0 && spec.f_start < spec.f_end && spec.f_end <= ctrl.f_clock / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "chirp needs 0 < f_start < f_end <= {}, got {}..{}",
            ctrl.f_clock / 2.0,
            spec.f_start,
            spec.f_end
        )));
    }
    if !(spec.duration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "chirp duration must be positive, got {}",
            spec.duration
        )));
    }
    let converter = Converter::new(cfg.converter, cfg.load, ctrl.f_clock)?;
    let dt = converter.dt();
    let vpl = cfg.converter.nominal_voltage;
    let mut rec = Recorder::new(converter, spec.time_series_stride, false);
    let mut nlm = AdaptiveNlm::new(ctrl.modulator(spec.m)?);

    let mut samples = Vec::new();
    let mut levels = Vec::new();
    let mut v_cycle = Vec::new();
    let mut i_cycle = Vec::new();
    let mut windows = Vec::new();
    let mut clock = 0usize;
    let mut acc = WindowAcc::new(0.0);
    let mut max_level = 0;
    let mut measured_peak: f64 = 0.0;
    let mut cycles = 0u64;
    while (clock as f64) * dt < spec.duration {
        let t = clock as f64 * dt;
        let timing = ctrl.timing(chirp_frequency(spec, t).min(ctrl.f_clock / 2.0))?;
        let mut synth = ctrl.synth(timing, LutMethod::Improved);
        samples.clear();
        levels.clear();
        v_cycle.clear();
        i_cycle.clear();
        synth.next_cycle_into(&mut samples);
        nlm.modulate_cycle_into(&samples, &mut levels);
        for &l in &levels {
            let (v, i) = rec.step(l)?;
            v_cycle.push(v);
            i_cycle.push(i);
            acc.spread = acc.spread.max(rec.converter.spread());
            max_level = max_level.max(l.abs());
            measured_peak = measured_peak.max(v.abs());
        }
        clock += levels.len();
        cycles += 1;
        acc.voltage.push(cycle_distortion(&v_cycle));
        acc.current.push(cycle_distortion(&i_cycle));
        acc.clocks += levels.len();
        acc.cycles += 1;
        if acc.clocks as f64 * dt >= spec.distortion_window {
            windows.push(acc.finish(dt));
            acc = WindowAcc::new(clock as f64 * dt);
        }
    }
    if acc.cycles > 0 {
        windows.push(acc.finish(dt));
    }

    let current = std::mem::take(&mut rec.current);
    let spectrogram = spectrogram_with(
        &WaveformRecord::new(ctrl.f_clock, current, spec.f_start),
        spec.spectrogram,
    )?;
    Ok(ChirpResult {
        windows,
        spectrogram,
        stats: *rec.stats(),
        rows: rec.rows,
        commanded_peak: max_level as f64 * vpl,
        measured_peak,
        cycles,
        clamps: nlm.clamps(),
    })
}
