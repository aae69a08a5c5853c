//! End-to-end experiments: sweep maps, chirp, channel mixing, spectrogram
//! message and single-tone runs.

pub mod chirp;
pub mod config;
pub mod message;
pub mod mix;
pub mod multitone;
pub mod output;
pub mod simulate;
pub mod sweep;

pub use config::Config;

use crate::converter::{Converter, ConverterStats};
use crate::error::{Error, Result};
use crate::fixedpoint::QFormat;
use crate::fixedpoint::TieRule;
use crate::modulation::{LevelCommand, ModulationParams, Modulator, ProductRounding};
use crate::synth::{
    derive_timing, CycleTiming, IndexMapping, LutMethod, LutSynth, LutTable, SynthParams,
};

use config::ControllerConfig;

/// Synthesis and modulation settings of the embedded controller, with its
/// sine table.
#[derive(Debug, Clone)]
pub struct Controller {
    pub f_clock: f64,
    pub n_levels: i32,
    pub format: QFormat,
    pub tie: TieRule,
    pub product: ProductRounding,
    pub mapping: IndexMapping,
    table: LutTable,
}

impl Controller {
    pub fn new(cfg: &ControllerConfig) -> Result<Self> {
        Ok(Self {
            f_clock: cfg.f_clock,
            n_levels: cfg.levels,
            format: cfg.qformat,
            tie: cfg.tie,
            product: cfg.product,
            mapping: cfg.index_mapping,
            table: LutTable::build(cfg.lut_length, cfg.qformat, cfg.tie)?,
        })
    }

    pub fn table(&self) -> &LutTable {
        &self.table
    }

    pub fn timing(&self, f_o: f64) -> Result<CycleTiming> {
        derive_timing(
            SynthParams {
                f_o,
                f_clock: self.f_clock,
            },
            self.table.len(),
            self.format,
            self.tie,
        )
    }

    pub fn synth(&self, timing: CycleTiming, method: LutMethod) -> LutSynth<'_> {
        LutSynth::new(&self.table, timing, method, self.mapping)
            .expect("timing derived from this table")
    }

    pub fn modulator(&self, m: f64) -> Result<Modulator> {
        Modulator::new(
            ModulationParams::new(m, self.n_levels)?,
            self.format,
            self.tie,
            self.product,
        )
    }
}

/// One row of the time-series output.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub time: f64,
    pub level: LevelCommand,
    pub v_out: f64,
    pub i_load: f64,
    pub module_voltages: Vec<f64>,
}

/// Drives a converter clock by clock and keeps what the outputs need.
#[derive(Debug, Clone)]
pub struct Recorder {
    pub converter: Converter,
    pub stride: usize,
    pub rows: Vec<TimeRow>,
    pub voltage: Vec<f64>,
    pub current: Vec<f64>,
    keep_voltage: bool,
    clock: u64,
}

impl Recorder {
    pub fn new(converter: Converter, stride: usize, keep_voltage: bool) -> Self {
        Self {
            converter,
            stride: stride.max(1),
            rows: Vec::new(),
            voltage: Vec::new(),
            current: Vec::new(),
            keep_voltage,
            clock: 0,
        }
    }

    /// Applies `level` for one clock; returns (v_out, i_load).
    pub fn step(&mut self, level: LevelCommand) -> Result<(f64, f64)> {
        let t = self.clock as f64 * self.converter.dt();
        let st = self.converter.step(level)?;
        let (v, i) = (st.output_voltage, st.load_current);
        if self.clock.is_multiple_of(self.stride as u64) {
            self.rows.push(TimeRow {
                time: t,
                level,
                v_out: v,
                i_load: i,
                module_voltages: st.modules.iter().map(|m| m.cap_voltage).collect(),
            });
        }
        if self.keep_voltage {
            self.voltage.push(v);
        }
        self.current.push(i);
        self.clock += 1;
        Ok((v, i))
    }

    pub fn stats(&self) -> &ConverterStats {
        self.converter.stats()
    }
}

pub(crate) fn check_levels(n_levels: i32, n_modules: usize) -> Result<()> {
    if n_levels as usize > n_modules {
        return Err(Error::InvalidParameter(format!(
            "{n_levels} levels need at least as many modules, have {n_modules}"
        )));
    }
    Ok(())
}
