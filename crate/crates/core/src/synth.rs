//! Look-up-table sinusoid synthesis.
//!
//! A table of `L` fixed-point sine samples is visited at fractional addresses
//! advancing by `ΔA = L·f_o/f_clock` per controller clock. Each output cycle
//! lasts `K = round(L/ΔA)` clocks. The three methods differ only in where a
//! cycle starts:
//!
//! * conventional: every cycle starts at address 0,
//! * inherited: a cycle continues from where the previous one ended,
//! * improved: every cycle starts at `L/2 − (K−1)/2·ΔA`, placing the addresses
//!   symmetrically around the half-table point so each cycle sums to zero.
//!
//! Addresses carry one guard fraction bit beyond ΔA so that the improved
//! start address is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{quantize, round_shift, FixedValue, QFormat, TieRule};

/// Where each output cycle starts reading the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LutMethod {
    Conventional,
    Inherited,
    Improved,
}

/// Mapping from a fractional address to a table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexMapping {
    /// Nearest entry, halves away from zero.
    #[default]
    Round,
    /// Integer part of the address.
    Truncate,
}

/// One full sine period stored as fixed-point samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LutTable {
    raw: Vec<i64>,
    format: QFormat,
}

impl LutTable {
    /// Builds an odd-symmetric sine table of even length `len >= 4`.
    pub fn build(len: usize, format: QFormat, tie: TieRule) -> Result<Self> {
        if len < 4 || !len.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "table length must be even and at least 4, got {len}"
            )));
        }
        if format.total_bits() > 63 {
            return Err(Error::InvalidFormat(format!(
                "{format} is too wide for table samples"
            )));
        }
        let mut raw = vec![0i64; len];
        let half = len / 2;
        for i in 1..half {
            let x = (std::f64::consts::TAU * i as f64 / len as f64).sin();
            let v = quantize(x, format, tie).value.raw() as i64;
            raw[i] = v;
            raw[len - i] = -v;
        }
        Ok(Self { raw, format })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn raw_samples(&self) -> &[i64] {
        &self.raw
    }

    pub fn sample(&self, i: usize) -> FixedValue {
        self.format.from_raw(self.raw[i] as i128)
    }
}

/// Sine table with the default away-from-zero tie rule.
pub fn build_sine_table(len: usize, format: QFormat) -> Result<LutTable> {
    LutTable::build(len, format, TieRule::AwayFromZero)
}

/// Objective frequency and controller clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub f_o: f64,
    pub f_clock: f64,
}

/// Per-cycle address schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleTiming {
    delta_a: FixedValue,
    k: usize,
    table_len: usize,
}

fn bits_for(len: usize) -> u32 {
    usize::BITS - len.leading_zeros()
}

/// Format of ΔA: enough integer bits for the table length, `frac_bits` fraction.
pub fn increment_format(table_len: usize, frac_bits: u32) -> Result<QFormat> {
    QFormat::signed(bits_for(table_len) + 2 + frac_bits, frac_bits)
}

/// Format of table addresses: ΔA's fraction plus one guard bit.
pub fn address_format(table_len: usize, frac_bits: u32) -> Result<QFormat> {
    QFormat::signed(bits_for(table_len) + 3 + frac_bits, frac_bits + 1)
}

impl CycleTiming {
    /// Address increment per clock.
    pub fn delta_a(&self) -> FixedValue {
        self.delta_a
    }

    /// Clocks per output cycle.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn table_len(&self) -> usize {
        self.table_len
    }

    /// Format of addresses produced for this timing.
    pub fn address_format(&self) -> QFormat {
        address_format(self.table_len, self.delta_a.format().frac_bits())
            .expect("validated when the timing was derived")
    }

    /// ΔA in address units (one guard bit finer than ΔA itself).
    pub(crate) fn delta_raw(&self) -> i64 {
        (self.delta_a.raw() as i64) << 1
    }

    /// `L` in address units.
    pub(crate) fn len_raw(&self) -> i64 {
        (self.table_len as i64) << (self.delta_a.format().frac_bits() + 1)
    }

    /// Frequency actually encoded by the quantized increment.
    pub fn objective_frequency(&self, f_clock: f64) -> f64 {
        self.delta_a.to_f64() * f_clock / self.table_len as f64
    }

    /// Repetition rate of a fixed-length cycle, `f_clock/K`.
    pub fn cycle_frequency(&self, f_clock: f64) -> f64 {
        f_clock / self.k as f64
    }

    /// `L − K·ΔA` in table entries; zero when ΔA divides L exactly.
    pub fn remainder(&self) -> f64 {
        let frac = self.delta_a.format().frac_bits();
        let d = ((self.table_len as i128) << frac) - self.k as i128 * self.delta_a.raw();
        d as f64 * self.delta_a.format().step()
    }

    /// Start address of an improved-method cycle: `L/2 − (K−1)/2·ΔA`, mod L.
    pub fn improved_start_raw(&self) -> i64 {
        let raw = (self.len_raw() - (self.k as i64 - 1) * self.delta_raw()) / 2;
        raw.rem_euclid(self.len_raw())
    }
}

/// Quantizes ΔA and derives K for a table of `table_len` entries.
pub fn derive_timing(
    p: SynthParams,
    table_len: usize,
    format: QFormat,
    tie: TieRule,
) -> Result<CycleTiming> {
    if !(p.f_clock > 0.0) || !p.f_clock.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "clock rate must be positive, got {}",
            p.f_clock
        )));
    }
    if !(p.f_o > 0.0) || p.f_o > p.f_clock / 2.0 {
        return Err(Error::FrequencyOutOfRange {
            f_o: p.f_o,
            max: p.f_clock / 2.0,
        });
    }
    if table_len < 4 || !table_len.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "table length must be even and at least 4, got {table_len}"
        )));
    }
    let fmt = increment_format(table_len, format.frac_bits())?;
    address_format(table_len, format.frac_bits())?;
    let delta_a = quantize(table_len as f64 * p.f_o / p.f_clock, fmt, tie).value;
    let d = delta_a.raw();
    if d <= 0 {
        return Err(Error::BelowResolution(p.f_o));
    }
    let len_raw = (table_len as i128) << fmt.frac_bits();
    // K = round(L/ΔA), halves away from zero
    let k = ((2 * len_raw + d) / (2 * d)) as usize;
    Ok(CycleTiming {
        delta_a,
        k,
        table_len,
    })
}

/// Start address of one output cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleState {
    pub n: u64,
    pub a0: FixedValue,
    pub method: LutMethod,
}

/// Samples of one output cycle and the addresses that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedCycle {
    pub samples: Vec<FixedValue>,
    pub addresses: Vec<FixedValue>,
    pub final_address: FixedValue,
}

/// Start address of the next cycle. `prev_end` is the last address of the
/// previous cycle and only matters for the inherited method.
pub fn initial_address(
    method: LutMethod,
    timing: &CycleTiming,
    prev_end: Option<FixedValue>,
) -> FixedValue {
    let fmt = timing.address_format();
    let raw = match (method, prev_end) {
        (LutMethod::Conventional, _) | (LutMethod::Inherited, None) => 0,
        (LutMethod::Inherited, Some(end)) => {
            let end = rescale(end, fmt.frac_bits());
            (end + timing.delta_raw() - timing.len_raw()).rem_euclid(timing.len_raw())
        }
        (LutMethod::Improved, _) => timing.improved_start_raw(),
    };
    fmt.from_raw(raw as i128)
}

fn rescale(v: FixedValue, frac_bits: u32) -> i64 {
    let from = v.format().frac_bits();
    let raw = if from <= frac_bits {
        v.raw() << (frac_bits - from)
    } else {
        round_shift(v.raw(), from - frac_bits, TieRule::AwayFromZero)
    };
    raw as i64
}

#[inline]
fn table_index(addr: i64, shift: u32, len: usize, mapping: IndexMapping) -> usize {
    let idx = match mapping {
        IndexMapping::Round => ((addr + (1 << (shift - 1))) >> shift) as usize,
        IndexMapping::Truncate => (addr >> shift) as usize,
    };
    if idx >= len {
        idx - len
    } else {
        idx
    }
}

/// Reads one output cycle starting at `state.a0`.
pub fn synthesize_cycle(
    state: &CycleState,
    timing: &CycleTiming,
    table: &LutTable,
    mapping: IndexMapping,
) -> SynthesizedCycle {
    let fmt = timing.address_format();
    let shift = fmt.frac_bits();
    let len_raw = timing.len_raw();
    let d = timing.delta_raw();
    let mut a = rescale(state.a0, shift).rem_euclid(len_raw);
    let mut samples = Vec::with_capacity(timing.k);
    let mut addresses = Vec::with_capacity(timing.k);
    for k in 0..timing.k {
        if k > 0 {
            a = (a + d).rem_euclid(len_raw);
        }
        addresses.push(fmt.from_raw(a as i128));
        samples.push(table.sample(table_index(a, shift, table.len(), mapping)));
    }
    SynthesizedCycle {
        samples,
        addresses,
        final_address: fmt.from_raw(a as i128),
    }
}

/// Streaming synthesizer producing raw table samples cycle by cycle.
#[derive(Debug, Clone)]
pub struct LutSynth<'t> {
    table: &'t LutTable,
    timing: CycleTiming,
    method: LutMethod,
    mapping: IndexMapping,
    prev_end: Option<i64>,
    cycle: u64,
}

impl<'t> LutSynth<'t> {
    pub fn new(
        table: &'t LutTable,
        timing: CycleTiming,
        method: LutMethod,
        mapping: IndexMapping,
    ) -> Result<Self> {
        if table.len() != timing.table_len {
            return Err(Error::InvalidParameter(format!(
                "timing derived for L = {}, table has {} entries",
                timing.table_len,
                table.len()
            )));
        }
        Ok(Self {
            table,
            timing,
            method,
            mapping,
            prev_end: None,
            cycle: 0,
        })
    }

    pub fn timing(&self) -> &CycleTiming {
        &self.timing
    }

    /// Number of cycles produced so far.
    pub fn cycles(&self) -> u64 {
        self.cycle
    }

    /// Start address (raw address units) of the next cycle.
    fn next_start(&self) -> i64 {
        let len_raw = self.timing.len_raw();
        match (self.method, self.prev_end) {
            (LutMethod::Conventional, _) | (LutMethod::Inherited, None) => 0,
            (LutMethod::Inherited, Some(end)) => {
                (end + self.timing.delta_raw() - len_raw).rem_euclid(len_raw)
            }
            (LutMethod::Improved, _) => self.timing.improved_start_raw(),
        }
    }

    /// Appends the next cycle's K raw samples to `out` and returns its start address.
    pub fn next_cycle_into(&mut self, out: &mut Vec<i64>) -> FixedValue {
        let a0 = self.next_start();
        let shift = self.timing.address_format().frac_bits();
        let len_raw = self.timing.len_raw();
        let d = self.timing.delta_raw();
        let len = self.table.len();
        let tab = self.table.raw_samples();
        let mut a = a0;
        out.reserve(self.timing.k);
        for k in 0..self.timing.k {
            if k > 0 {
                a += d;
                if a >= len_raw {
                    a -= len_raw;
                }
            }
            out.push(tab[table_index(a, shift, len, self.mapping)]);
        }
        self.prev_end = Some(a);
        self.cycle += 1;
        self.timing.address_format().from_raw(a0 as i128)
    }
}

/// Appends one symmetric-start cycle of `k` clocks at the increment of
/// `timing`. `k` may differ from `timing.k()` when cycles of unequal length
/// tile a longer period.
pub fn improved_cycle_into(
    table: &LutTable,
    timing: &CycleTiming,
    k: usize,
    mapping: IndexMapping,
    out: &mut Vec<i64>,
) {
    let shift = timing.address_format().frac_bits();
    let len_raw = timing.len_raw();
    let d = timing.delta_raw();
    let tab = table.raw_samples();
    let mut a = ((len_raw - (k as i64 - 1) * d) / 2).rem_euclid(len_raw);
    out.reserve(k);
    for i in 0..k {
        if i > 0 {
            a += d;
            if a >= len_raw {
                a -= len_raw;
            }
        }
        out.push(tab[table_index(a, shift, table.len(), mapping)]);
    }
}

/// Outcome of the low-frequency oscillation predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LfPrediction {
    /// ΔA divides L exactly; every inherited cycle is identical.
    NoOscillation,
    /// `ΔA/(L − K·ΔA)`: the number of output cycles (of K clocks each) over
    /// which the start address drifts by one increment, signed.
    Relative(f64),
}

impl LfPrediction {
    /// Frequency of the cycle-to-cycle net-value oscillation in Hz.
    ///
    /// This is the rate seen in the sequence of per-cycle sums, which is
    /// sampled once per K clocks: `f_o / (K·|rel|) = |f_clock/K − f_o|`.
    pub fn oscillation_frequency(&self, timing: &CycleTiming, f_clock: f64) -> Option<f64> {
        match self {
            Self::NoOscillation => None,
            Self::Relative(r) => {
                Some(timing.objective_frequency(f_clock) / (timing.k as f64 * r.abs()))
            }
        }
    }

    /// Aliased K-th harmonic seen in the level stream, `f_o/|rel| = |f_clock − K·f_o|`.
    pub fn beat_frequency(&self, timing: &CycleTiming, f_clock: f64) -> Option<f64> {
        match self {
            Self::NoOscillation => None,
            Self::Relative(r) => Some(timing.objective_frequency(f_clock) / r.abs()),
        }
    }
}

/// `ΔA/(L − K·ΔA)`, or no oscillation when the division is exact.
pub fn predict_lf_oscillation(timing: &CycleTiming) -> LfPrediction {
    let frac = timing.delta_a.format().frac_bits();
    let d = ((timing.table_len as i128) << frac) - timing.k as i128 * timing.delta_a.raw();
    if d == 0 {
        LfPrediction::NoOscillation
    } else {
        LfPrediction::Relative(timing.delta_a.raw() as f64 / d as f64)
    }
}
