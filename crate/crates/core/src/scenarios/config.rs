//! Declarative experiment configuration (TOML).
//!
//! Every section and key is optional; unknown keys are rejected.
//!
//! ```toml
//! [controller]
//! f_clock = 100e6
//! levels = 7
//! qformat = "Q18.14"
//!
//! [sweep]
//! methods = ["conventional", "adaptive"]
//! spacing = "linear"
//! f_min = 25e3
//! f_max = 5e6
//! f_step = 25e3
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{SpectrogramParams, Thresholds};
use crate::converter::{ConverterConfig, LoadModel};
use crate::error::{Error, Result};
use crate::fixedpoint::{QFormat, TieRule};
use crate::modulation::ProductRounding;
use crate::synth::IndexMapping;

use super::sweep::SweepMethod;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub controller: ControllerConfig,
    pub converter: ConverterConfig,
    pub load: LoadModel,
    pub analysis: Thresholds,
    pub sweep: SweepConfig,
    pub chirp: ChirpConfig,
    pub mix: MixConfig,
    pub message: MessageConfig,
    pub simulate: SimulateConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.controller;
        if !(c.f_clock > 0.0) {
            return Err(Error::Config(format!(
                "controller.f_clock must be positive, got {}",
                c.f_clock
            )));
        }
        if c.levels < 1 {
            return Err(Error::Config(format!(
                "controller.levels must be at least 1, got {}",
                c.levels
            )));
        }
        if c.levels as usize > self.converter.n_modules {
            return Err(Error::Config(format!(
                "controller.levels = {} exceeds converter.n_modules = {}",
                c.levels, self.converter.n_modules
            )));
        }
        self.converter.validate()?;
        self.load.validate()?;
        self.sweep.validate(c.f_clock)?;
        Ok(())
    }
}

/// Embedded-controller number formats and synthesis settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Hz.
    pub f_clock: f64,
    /// Largest output level magnitude.
    pub levels: i32,
    /// Reference-sample format, e.g. `"Q18.14"`.
    pub qformat: QFormat,
    pub tie: TieRule,
    pub product: ProductRounding,
    pub lut_length: usize,
    pub index_mapping: IndexMapping,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            f_clock: 100e6,
            levels: 7,
            qformat: QFormat::default(),
            tie: TieRule::AwayFromZero,
            product: ProductRounding::Truncate,
            lut_length: 1024,
            index_mapping: IndexMapping::Round,
        }
    }
}

/// Frequency axis spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Log,
    Linear,
}

/// What the sweep classifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepSignal {
    /// Integer level stream.
    Levels,
    /// RL-load current under ideal module voltages.
    Current,
    /// Load current from the full converter model.
    Converter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<SweepMethod>,
    pub m_min: f64,
    pub m_max: f64,
    pub m_step: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub spacing: Spacing,
    /// Number of frequencies for log spacing.
    pub f_count: usize,
    /// Step for linear spacing (Hz).
    pub f_step: f64,
    /// Output cycles synthesized per cell.
    pub cycles: usize,
    pub signal: SweepSignal,
    /// Cap on samples analysed for non-periodic cells.
    pub max_record_samples: usize,
    /// Use m step 0.01 and 1 kHz..5 MHz in 1 kHz steps.
    pub full_grid: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: SweepMethod::ALL.to_vec(),
            m_min: 0.0,
            m_max: 1.0,
            m_step: 0.05,
            f_min: 1e3,
            f_max: 5e6,
            spacing: Spacing::Log,
            f_count: 200,
            f_step: 1e3,
            cycles: 64,
            signal: SweepSignal::Current,
            max_record_samples: 1 << 21,
            full_grid: false,
        }
    }
}

impl SweepConfig {
    fn validate(&self, f_clock: f64) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("sweep.methods is empty".into());
        }
        if !(0.0..=1.0).contains(&self.m_min)
            || !(0.0..=1.0).contains(&self.m_max)
            || self.m_min > self.m_max
        {
            return bad("sweep modulation range must lie in [0, 1]".into());
        }
        if !(self.m_step > 0.0) {
            return bad("sweep.m_step must be positive".into());
        }
        if !(self.f_min > 0.0) || self.f_min > self.f_max || self.f_max > f_clock / 2.0 {
            return bad(format!(
                "sweep frequencies must satisfy 0 < f_min <= f_max <= {}",
                f_clock / 2.0
            ));
        }
        if self.spacing == Spacing::Log && self.f_count == 0 {
            return bad("sweep.f_count must be positive".into());
        }
        if self.spacing == Spacing::Linear && !(self.f_step > 0.0) {
            return bad("sweep.f_step must be positive".into());
        }
        if self.cycles < 4 {
            return bad("sweep.cycles must be at least 4".into());
        }
        Ok(())
    }

    /// Modulation factors of the grid.
    pub fn m_values(&self) -> Vec<f64> {
        let step = if self.full_grid { 0.01 } else { self.m_step };
        let n = ((self.m_max - self.m_min) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.m_min + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    }

    /// Frequencies of the grid.
    pub fn f_values(&self) -> Vec<f64> {
        let (spacing, step, lo, hi) = if self.full_grid {
            (Spacing::Linear, 1e3, 1e3, 5e6)
        } else {
            (self.spacing, self.f_step, self.f_min, self.f_max)
        };
        match spacing {
            Spacing::Linear => {
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| lo + i as f64 * step).collect()
            }
            Spacing::Log => {
                if self.f_count == 1 {
                    return vec![lo];
                }
                let r = (hi / lo).ln();
                (0..self.f_count)
                    .map(|i| lo * (r * i as f64 / (self.f_count - 1) as f64).exp())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpConfig {
    pub f_start: f64,
    pub f_end: f64,
    /// Seconds.
    pub duration: f64,
    pub m: f64,
    /// Minimum span of a distortion window (s); windows hold whole cycles.
    pub distortion_window: f64,
    pub spectrogram: SpectrogramParams,
    /// Write every n-th clock to the time-series CSV.
    pub time_series_stride: usize,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        Self {
            f_start: 1e3,
            f_end: 5e6,
            duration: 10e-3,
            m: 1.0,
            distortion_window: 50e-6,
            spectrogram: SpectrogramParams {
                window_len: 4096,
                hop: 2048,
                max_frequency: Some(6e6),
            },
            time_series_stride: 50,
        }
    }
}

/// One channel of a mixture plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Hz.
    pub frequency: f64,
    /// Peak amplitude in converter levels.
    pub amplitude: f64,
    /// Seconds.
    pub start: f64,
    /// Seconds.
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    pub channels: Vec<ChannelSpec>,
    /// Fixed amplitude scale; when absent the plan is scaled so its largest
    /// instantaneous amplitude sum equals the level count.
    pub scale: Option<f64>,
    /// Instants (s) at which the spectrum of the surrounding constant-channel
    /// interval is reported.
    pub instants: Vec<f64>,
    pub spectrogram: SpectrogramParams,
    pub time_series_stride: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        let ch = |frequency, amplitude, start, end| ChannelSpec {
            frequency,
            amplitude,
            start,
            end,
        };
        Self {
            channels: vec![
                ch(10e3, 1.0, 0.0, 1000e-6),
                ch(100e3, 2.0, 0.0, 200e-6),
                ch(200e3, 4.0, 100e-6, 500e-6),
                ch(400e3, 3.0, 400e-6, 800e-6),
                ch(1e6, 4.0, 600e-6, 700e-6),
                ch(3e6, 4.0, 700e-6, 800e-6),
                ch(5e6, 6.0, 800e-6, 1000e-6),
            ],
            scale: None,
            instants: vec![
                50e-6, 150e-6, 300e-6, 450e-6, 550e-6, 650e-6, 750e-6, 900e-6,
            ],
            spectrogram: SpectrogramParams {
                window_len: 2048,
                hop: 1024,
                max_frequency: Some(6e6),
            },
            time_series_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MessageConfig {
    /// `"arecibo"`, `"random"` or a path to a text bitmap.
    pub bitmap: String,
    /// Size of a random bitmap.
    pub rows: usize,
    pub columns: usize,
    /// Seed of a random bitmap.
    pub seed: u64,
    pub channel_start: f64,
    pub channel_step: f64,
    /// Seconds per bitmap column.
    pub column_duration: f64,
    /// Prepend an all-on and an all-off column for decoder thresholds.
    pub calibration: bool,
    /// Fraction of the level range shared by the channels.
    pub headroom: f64,
    pub spectrogram: SpectrogramParams,
    pub time_series_stride: usize,
}

impl Default for MessageConfig {
    fn default() -> Self {
        Self {
            bitmap: "arecibo".into(),
            rows: 23,
            columns: 73,
            seed: 1974,
            channel_start: 50e3,
            channel_step: 50e3,
            column_duration: 1e-3,
            calibration: true,
            headroom: 1.0,
            spectrogram: SpectrogramParams {
                window_len: 10_000,
                hop: 5_000,
                max_frequency: Some(1.5e6),
            },
            time_series_stride: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub frequency: f64,
    pub m: f64,
    pub method: SweepMethod,
    pub cycles: usize,
    pub time_series_stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            frequency: 1e6,
            m: 1.0,
            method: SweepMethod::Adaptive,
            cycles: 64,
            time_series_stride: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_config_and_unknown_keys() {
        let cfg = Config::from_toml("[controller]\nlevels = 5\nqformat = \"Q20.16\"\n").unwrap();
        assert_eq!(cfg.controller.levels, 5);
        assert_eq!(cfg.controller.qformat.frac_bits(), 16);
        assert_eq!(cfg.converter, ConverterConfig::default());
        assert!(Config::from_toml("[controller]\nlevelz = 5\n").is_err());
        assert!(Config::from_toml("[nonsense]\n").is_err());
        assert!(Config::from_toml("[controller]\nqformat = \"Q8\"\n").is_err());
        assert!(Config::from_toml("[controller]\nlevels = 9\n").is_err());
        assert!(Config::from_toml("[sweep]\nf_max = 60e6\n").is_err());
    }

    #[test]
    fn grids() {
        let s = SweepConfig::default();
        let m = s.m_values();
        assert_eq!(m.len(), 21);
        assert_eq!(m[20], 1.0);
        let f = s.f_values();
        assert_eq!(f.len(), 200);
        assert!((f[0] - 1e3).abs() < 1e-9 && (f[199] - 5e6).abs() < 1e-3);
        let lin = SweepConfig {
            spacing: Spacing::Linear,
            f_min: 25e3,
            f_step: 25e3,
            ..Default::default()
        };
        assert_eq!(lin.f_values().len(), 200);
        let full = SweepConfig {
            full_grid: true,
            ..Default::default()
        };
        assert_eq!(full.m_values().len(), 101);
        assert_eq!(full.f_values().len(), 5000);
    }
}
