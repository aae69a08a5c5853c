//! Classification maps over modulation factor and frequency.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{Config, SweepConfig, SweepSignal};
use super::Controller;
use crate::analysis::{classify, Category, ClassificationResult, Thresholds, WaveformRecord};
use crate::converter::{Converter, ConverterConfig, LoadModel};
use crate::error::Result;
use crate::modulation::{AdaptiveNlm, LevelCommand};
use crate::synth::LutMethod;

/// The four synthesis/modulation configurations compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    /// Zero-start LUT, plain NLM.
    Conventional,
    /// Error-inherited LUT, plain NLM.
    Inherited,
    /// Symmetric-start LUT, plain NLM.
    Improved,
    /// Symmetric-start LUT, bias-eliminating NLM.
    Adaptive,
}

impl SweepMethod {
    pub const ALL: [SweepMethod; 4] = [
        SweepMethod::Conventional,
        SweepMethod::Inherited,
        SweepMethod::Improved,
        SweepMethod::Adaptive,
    ];

    pub fn lut_method(self) -> LutMethod {
        match self {
            SweepMethod::Conventional => LutMethod::Conventional,
            SweepMethod::Inherited => LutMethod::Inherited,
            SweepMethod::Improved | SweepMethod::Adaptive => LutMethod::Improved,
        }
    }

    pub fn is_adaptive(self) -> bool {
        self == SweepMethod::Adaptive
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepMethod::Conventional => "conventional",
            SweepMethod::Inherited => "inherited",
            SweepMethod::Improved => "improved",
            SweepMethod::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for SweepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for SweepMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepMethod::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown method {s:?}")))
    }
}

/// Result of one (method, f, m) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub f_hz: f64,
    pub m: f64,
    /// Clocks per output cycle.
    pub k: usize,
    pub classification: ClassificationResult,
    /// Output cycles synthesized.
    pub cycles: u64,
    /// Cycles whose levels do not sum to zero.
    pub nonzero_cycles: u64,
    /// Cycles in which the adaptive correction was clamped.
    pub clamps: u64,
}

/// All cells of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMap {
    pub method: SweepMethod,
    pub cells: Vec<CellResult>,
}

impl MethodMap {
    pub fn count(&self, c: Category) -> usize {
        self.cells
            .iter()
            .filter(|x| x.classification.category == c)
            .count()
    }

    pub fn fraction(&self, c: Category) -> f64 {
        self.count(c) as f64 / self.cells.len().max(1) as f64
    }

    pub fn cycles(&self) -> u64 {
        self.cells.iter().map(|c| c.cycles).sum()
    }

    pub fn nonzero_cycles(&self) -> u64 {
        self.cells.iter().map(|c| c.nonzero_cycles).sum()
    }

    pub fn clamps(&self) -> u64 {
        self.cells.iter().map(|c| c.clamps).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub maps: Vec<MethodMap>,
}

impl SweepResult {
    pub fn map(&self, method: SweepMethod) -> Option<&MethodMap> {
        self.maps.iter().find(|m| m.method == method)
    }
}

/// Everything a cell needs besides its coordinates.
#[derive(Debug, Clone)]
pub struct SweepContext<'a> {
    pub controller: &'a Controller,
    pub converter: ConverterConfig,
    pub load: LoadModel,
    pub thresholds: Thresholds,
    pub spec: &'a SweepConfig,
}

impl SweepContext<'_> {
    fn volts_per_level(&self) -> f64 {
        self.converter.nominal_voltage
    }
}

/// Synthesizes, modulates and classifies one grid cell.
pub fn evaluate_cell(
    ctx: &SweepContext<'_>,
    method: SweepMethod,
    f: f64,
    m: f64,
) -> Result<CellResult> {
    let ctrl = ctx.controller;
    let spec = ctx.spec;
    let timing = ctrl.timing(f)?;
    let k = timing.k();
    let modulator = ctrl.modulator(m)?;
    let mut synth = ctrl.synth(timing, method.lut_method());
    let mut adaptive = method.is_adaptive().then(|| AdaptiveNlm::new(modulator));
    let dt = 1.0 / ctrl.f_clock;

    // cycles to analyse when the stream is not periodic, and warm-up cycles
    // so the load current forgets its zero initial state
    let rec_cycles = spec.cycles.min((spec.max_record_samples / k).max(4));
    let warm_cycles = match spec.signal {
        SweepSignal::Levels => 0,
        _ => ((10.0 * ctx.load.time_constant() * ctrl.f_clock) / k as f64).ceil() as usize,
    };
    let total = spec.cycles.max(rec_cycles + warm_cycles);
    let tail_from = total - rec_cycles - warm_cycles;

    let mut converter = match spec.signal {
        SweepSignal::Converter => Some(Converter::new(ctx.converter, ctx.load, ctrl.f_clock)?),
        _ => None,
    };
    let mut samples = Vec::with_capacity(k);
    let mut levels: Vec<LevelCommand> = Vec::with_capacity(k);
    let mut first: Vec<LevelCommand> = Vec::new();
    let mut tail: Vec<LevelCommand> = Vec::new();
    let mut conv_tail: Vec<f64> = Vec::new();
    let mut periodic = true;
    let mut nonzero = 0u64;
    for n in 0..total {
        samples.clear();
        levels.clear();
        synth.next_cycle_into(&mut samples);
        let sum = match adaptive.as_mut() {
            Some(a) => a.modulate_cycle_into(&samples, &mut levels).sum,
            None => {
                modulator.modulate_into(&samples, &mut levels);
                levels.iter().map(|&l| l as i64).sum()
            }
        };
        nonzero += (sum != 0) as u64;
        if n == 0 {
            first.extend_from_slice(&levels);
        } else if periodic && levels != first {
            periodic = false;
        }
        if n >= tail_from {
            tail.extend_from_slice(&levels);
        }
        if let Some(c) = converter.as_mut() {
            for &l in &levels {
                let i = c.step(l)?.load_current;
                if n >= tail_from + warm_cycles {
                    conv_tail.push(i);
                }
            }
        }
    }

    let vpl = ctx.volts_per_level();
    let f_cycle = timing.cycle_frequency(ctrl.f_clock);
    let f_obj = timing.objective_frequency(ctrl.f_clock);
    let record = match spec.signal {
        SweepSignal::Converter => WaveformRecord::new(ctrl.f_clock, conv_tail, f_obj),
        SweepSignal::Levels if periodic => WaveformRecord::periodic(
            ctrl.f_clock,
            first.iter().map(|&l| l as f64).collect(),
            f_cycle,
        ),
        SweepSignal::Current if periodic => WaveformRecord::periodic(
            ctrl.f_clock,
            ctx.load.periodic_current(&first, vpl, dt),
            f_cycle,
        ),
        SweepSignal::Levels => WaveformRecord::new(
            ctrl.f_clock,
            tail[warm_cycles * k..].iter().map(|&l| l as f64).collect(),
            f_obj,
        ),
        SweepSignal::Current => {
            let mut i = 0.0;
            let mut out = Vec::with_capacity(rec_cycles * k);
            for (j, &l) in tail.iter().enumerate() {
                i = ctx.load.step(i, l as f64 * vpl, dt);
                if j >= warm_cycles * k {
                    out.push(i);
                }
            }
            WaveformRecord::new(ctrl.f_clock, out, f_obj)
        }
    };
    let clamps = adaptive.as_ref().map_or(0, |a| a.clamps());
    Ok(CellResult {
        f_hz: f,
        m,
        k,
        classification: classify(&record, ctx.thresholds),
        cycles: total as u64,
        nonzero_cycles: nonzero,
        clamps,
    })
}

/// Runs the whole grid for every configured method, frequency-major.
pub fn run_sweep(cfg: &Config) -> Result<SweepResult> {
    let controller = Controller::new(&cfg.controller)?;
    let ctx = SweepContext {
        controller: &controller,
        converter: cfg.converter,
        load: cfg.load,
        thresholds: cfg.analysis,
        spec: &cfg.sweep,
    };
    let fs = cfg.sweep.f_values();
    let ms = cfg.sweep.m_values();
    let mut maps = Vec::new();
    for &method in &cfg.sweep.methods {
        let mut cells = Vec::with_capacity(fs.len() * ms.len());
        for &f in &fs {
            for &m in &ms {
                cells.push(evaluate_cell(&ctx, method, f, m)?);
            }
        }
        maps.push(MethodMap { method, cells });
    }
    Ok(SweepResult { maps })
}
