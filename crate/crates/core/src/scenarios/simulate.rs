//! Single-tone run through the converter.

use super::config::Config;
use super::{check_levels, Controller, Recorder, TimeRow};
use crate::analysis::{
    classify, total_distortion, ClassificationResult, DistortionReport, WaveformRecord,
};
use crate::converter::Converter;
use crate::converter::ConverterStats;
use crate::error::Result;
use crate::modulation::AdaptiveNlm;

#[derive(Debug, Clone)]
pub struct SimulateResult {
    pub f_o: f64,
    pub k: usize,
    pub rows: Vec<TimeRow>,
    /// Classification of the load current after the load has settled.
    pub classification: ClassificationResult,
    pub voltage_distortion: DistortionReport,
    pub current_distortion: DistortionReport,
    pub stats: ConverterStats,
    pub nonzero_cycles: u64,
    pub clamps: u64,
}

pub fn run_simulate(cfg: &Config) -> Result<SimulateResult> {
    check_levels(cfg.controller.levels, cfg.converter.n_modules)?;
    let spec = &cfg.simulate;
    let ctrl = Controller::new(&cfg.controller)?;
    let timing = ctrl.timing(spec.frequency)?;
    let k = timing.k();
    let modulator = ctrl.modulator(spec.m)?;
    let mut synth = ctrl.synth(timing, spec.method.lut_method());
    let mut adaptive = spec
        .method
        .is_adaptive()
        .then(|| AdaptiveNlm::new(modulator));
    let converter = Converter::new(cfg.converter, cfg.load, ctrl.f_clock)?;
    let mut rec = Recorder::new(converter, spec.time_series_stride, true);

    let warm = ((10.0 * cfg.load.time_constant() * ctrl.f_clock) / k as f64).ceil() as usize;
    let cycles = spec.cycles.max(1) + warm;
    let (mut samples, mut levels) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let mut nonzero = 0u64;
    for _ in 0..cycles {
        samples.clear();
        levels.clear();
        synth.next_cycle_into(&mut samples);
        match adaptive.as_mut() {
            Some(a) => {
                a.modulate_cycle_into(&samples, &mut levels);
            }
            None => modulator.modulate_into(&samples, &mut levels),
        }
        nonzero += (levels.iter().map(|&l| l as i64).sum::<i64>() != 0) as u64;
        for &l in &levels {
            rec.step(l)?;
        }
    }

    let fs = ctrl.f_clock;
    let f_cycle = timing.cycle_frequency(fs);
    let skip = warm * k;
    let voltage = WaveformRecord::new(fs, rec.voltage[skip..].to_vec(), f_cycle);
    let current = WaveformRecord::new(fs, rec.current[skip..].to_vec(), f_cycle);
    let classification = classify(
        &WaveformRecord::new(fs, current.samples.clone(), timing.objective_frequency(fs)),
        cfg.analysis,
    );
    Ok(SimulateResult {
        f_o: timing.objective_frequency(fs),
        k,
        voltage_distortion: total_distortion(&voltage)?,
        current_distortion: total_distortion(&current)?,
        classification,
        stats: *rec.stats(),
        rows: rec.rows,
        nonzero_cycles: nonzero,
        clamps: adaptive.map_or(0, |a| a.clamps()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Category;

    #[test]
    fn default_tone_is_clean() {
        let mut cfg = Config::default();
        cfg.simulate.cycles = 16;
        let r = run_simulate(&cfg).unwrap();
        assert_eq!(r.k, 100);
        assert_eq!(r.classification.category, Category::Ideal);
        assert_eq!(r.nonzero_cycles, 0);
        assert!(r.voltage_distortion.total_distortion < 0.184);
        assert!(r.stats.max_spread < 0.1);
        assert!(!r.rows.is_empty());
    }
}
