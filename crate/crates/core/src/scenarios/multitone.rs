//! Frequency-locked sums of gated tones.
//!
//! Every channel frequency must be a whole multiple of a common base
//! frequency whose period is a whole number of clocks. Each channel then
//! fits an integer number of cycles into one base period; the cycles are
//! read from the table with symmetric starts and laid out mirror-symmetric
//! in the period, so each channel's reference, the mixture and its rounded
//! levels are all odd about the period centre and sum to zero. Channels
//! switch on and off only at base-period boundaries.

use super::config::ChannelSpec;
use super::Controller;
use crate::error::{Error, Result};
use crate::fixedpoint::{quantize, round_shift, QFormat, TieRule};
use crate::modulation::{AdaptiveNlm, LevelCommand};
use crate::synth::improved_cycle_into;

/// Greatest common divisor.
fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Clocks of each of `n` cycles tiling `period` clocks, as evenly as
/// possible and mirror-symmetric, so the whole period reads back negated
/// when reversed.
pub fn cycle_lengths(period: usize, n: usize) -> Vec<usize> {
    let boundary = |j: usize| {
        if 2 * j <= n {
            (2 * j * period + n) / (2 * n)
        } else {
            period - (2 * (n - j) * period + n) / (2 * n)
        }
    };
    (0..n).map(|j| boundary(j + 1) - boundary(j)).collect()
}

/// One channel, precomputed over a single base period.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneChannel {
    pub spec: ChannelSpec,
    /// Cycles of this channel per base period.
    pub cycles_per_period: usize,
    /// Amplitude gain in the sample format (fraction of full scale).
    pub gain_raw: i64,
    /// Unit-amplitude reference over one base period.
    pub period_samples: Vec<i64>,
}

/// Mixture plan locked to a base period.
#[derive(Debug, Clone)]
pub struct Multitone {
    pub channels: Vec<ToneChannel>,
    base_frequency: f64,
    k_base: usize,
    periods: usize,
    scale: f64,
    frac_bits: u32,
    tie: TieRule,
}

impl Multitone {
    /// Builds the plan. `scale` multiplies every amplitude; `None` scales the
    /// loudest base period to exactly `n_levels`. `duration` defaults to the
    /// latest channel end.
    pub fn new(
        ctrl: &Controller,
        channels: &[ChannelSpec],
        scale: Option<f64>,
        duration: Option<f64>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidParameter(
                "a mixture needs at least one channel".into(),
            ));
        }
        let mut base = 0u64;
        for c in channels {
            let hz = c.frequency.round();
            if !(c.frequency > 0.0) || (c.frequency - hz).abs() > 1e-9 * hz.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "channel frequency {} must be a positive whole number of Hz",
                    c.frequency
                )));
            }
            if c.frequency > ctrl.f_clock / 2.0 {
                return Err(Error::FrequencyOutOfRange {
                    f_o: c.frequency,
                    max: ctrl.f_clock / 2.0,
                });
            }
            if !(c.amplitude >= 0.0) || !(c.end >= c.start) || c.start < 0.0 {
                return Err(Error::InvalidParameter(format!("invalid channel {c:?}")));
            }
            base = gcd(base, hz as u64);
        }
        let base_frequency = base as f64;
        let k_exact = ctrl.f_clock / base_frequency;
        let k_base = k_exact.round() as usize;
        if (k_exact - k_base as f64).abs() > 1e-9 * k_exact {
            return Err(Error::InvalidParameter(format!(
                "base frequency {base_frequency} Hz does not divide the {} Hz clock",
                ctrl.f_clock
            )));
        }
        let tb = 1.0 / base_frequency;
        let end = duration.unwrap_or_else(|| channels.iter().map(|c| c.end).fold(0.0, f64::max));
        let periods = (end / tb - 1e-9).ceil().max(0.0) as usize;

        let mut plan = Self {
            channels: Vec::new(),
            base_frequency,
            k_base,
            periods,
            scale: 1.0,
            frac_bits: ctrl.format.frac_bits(),
            tie: ctrl.tie,
        };
        let specs: Vec<ChannelSpec> = channels.to_vec();
        let max_sum = (0..periods)
            .map(|j| {
                specs
                    .iter()
                    .filter(|c| plan.gated(c, j))
                    .map(|c| c.amplitude)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let n = ctrl.n_levels as f64;
        plan.scale = match scale {
            Some(s) => s,
            None if max_sum > 0.0 => n / max_sum,
            None => 1.0,
        };
        for j in 0..periods {
            let sum: f64 = specs
                .iter()
                .filter(|c| plan.gated(c, j))
                .map(|c| c.amplitude)
                .sum::<f64>()
                * plan.scale;
            if sum > n * (1.0 + 1e-12) {
                return Err(Error::Clipping {
                    sum,
                    limit: n,
                    time: j as f64 * tb,
                });
            }
        }

        let gain_fmt = QFormat::signed(2 + plan.frac_bits, plan.frac_bits)?;
        for spec in specs {
            let hz = spec.frequency.round() as u64;
            let cycles_per_period = (hz / base) as usize;
            let timing = ctrl.timing(spec.frequency)?;
            let mut period_samples = Vec::with_capacity(k_base);
            for k in cycle_lengths(k_base, cycles_per_period) {
                improved_cycle_into(ctrl.table(), &timing, k, ctrl.mapping, &mut period_samples);
            }
            let gain_raw = quantize(spec.amplitude * plan.scale / n, gain_fmt, ctrl.tie)
                .value
                .raw() as i64;
            plan.channels.push(ToneChannel {
                spec,
                cycles_per_period,
                gain_raw,
                period_samples,
            });
        }
        Ok(plan)
    }

    fn gated(&self, c: &ChannelSpec, period: usize) -> bool {
        let tb = 1.0 / self.base_frequency;
        let (t0, t1) = (period as f64 * tb, (period + 1) as f64 * tb);
        let eps = 1e-9 * tb;
        c.start <= t0 + eps && t1 <= c.end + eps
    }

    pub fn base_frequency(&self) -> f64 {
        self.base_frequency
    }

    /// Clocks per base period.
    pub fn k_base(&self) -> usize {
        self.k_base
    }

    /// Base periods in the plan.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Amplitude scale actually applied.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Whether channel `ch` plays during base period `period`.
    pub fn active(&self, ch: usize, period: usize) -> bool {
        self.gated(&self.channels[ch].spec, period)
    }

    /// Appends the mixed reference of one base period (raw sample format).
    pub fn reference_period_into(&self, period: usize, out: &mut Vec<i64>) {
        let start = out.len();
        out.resize(start + self.k_base, 0);
        let dst = &mut out[start..];
        for (i, ch) in self.channels.iter().enumerate() {
            if !self.active(i, period) || ch.gain_raw == 0 {
                continue;
            }
            for (d, &s) in dst.iter_mut().zip(&ch.period_samples) {
                *d += round_shift(s as i128 * ch.gain_raw as i128, self.frac_bits, self.tie) as i64;
            }
        }
    }

    /// Drives `sink` with every level of the plan, modulating each base period
    /// adaptively so it sums to zero. Returns the number of clamped periods.
    pub fn run(
        &self,
        ctrl: &Controller,
        mut sink: impl FnMut(LevelCommand) -> Result<()>,
    ) -> Result<u64> {
        let mut nlm = AdaptiveNlm::new(ctrl.modulator(1.0)?);
        let mut reference = Vec::with_capacity(self.k_base);
        let mut levels = Vec::with_capacity(self.k_base);
        for j in 0..self.periods {
            reference.clear();
            levels.clear();
            self.reference_period_into(j, &mut reference);
            nlm.modulate_cycle_into(&reference, &mut levels);
            for &l in &levels {
                sink(l)?;
            }
        }
        Ok(nlm.clamps())
    }
}
