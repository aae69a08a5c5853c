//! Nearest-level modulation.
//!
//! A reference sample `s` in [-1, 1] becomes the integer level
//! `round(s · m · n_levels)`. The product is formed in fixed point: the gain
//! `m·n_levels` is quantized to the sample's fraction width, multiplied
//! exactly, and requantized to that width before the final rounding. By
//! default the requantization truncates, as an arithmetic right shift does in
//! hardware; this is what lets an otherwise zero-sum cycle occasionally pick
//! up a net level.
//!
//! The adaptive variant replaces the last level of every output cycle with
//! the negated sum of the others, so each cycle integrates to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{quantize, round_shift, FixedValue, QFormat, TieRule};

/// Integer converter level, bounded by `±n_levels`.
pub type LevelCommand = i32;

/// Modulation factor and level count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    pub m: f64,
    pub n_levels: i32,
}

impl ModulationParams {
    pub fn new(m: f64, n_levels: i32) -> Result<Self> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::InvalidParameter(format!(
                "modulation factor must be in [0, 1], got {m}"
            )));
        }
        if n_levels < 1 {
            return Err(Error::InvalidParameter(format!(
                "need at least one level, got {n_levels}"
            )));
        }
        Ok(Self { m, n_levels })
    }
}

/// How the sample × gain product is brought back to the sample width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductRounding {
    /// Arithmetic right shift (floor).
    #[default]
    Truncate,
    /// Round to nearest under the configured tie rule.
    Nearest,
}

/// Plain nearest-level modulator for a fixed sample format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulator {
    gain_raw: i64,
    frac_bits: u32,
    n_levels: i32,
    tie: TieRule,
    product: ProductRounding,
}

impl Modulator {
    pub fn new(
        p: ModulationParams,
        sample_format: QFormat,
        tie: TieRule,
        product: ProductRounding,
    ) -> Result<Self> {
        let frac_bits = sample_format.frac_bits();
        let int_bits = 34 - (p.n_levels as u32).leading_zeros();
        let gain_format = QFormat::signed((int_bits + frac_bits).min(64), frac_bits)?;
        let gain = quantize(p.m * p.n_levels as f64, gain_format, tie);
        if gain.saturated {
            return Err(Error::InvalidFormat(format!(
                "{sample_format} cannot hold a gain of {} levels",
                p.n_levels
            )));
        }
        Ok(Self {
            gain_raw: gain.value.raw() as i64,
            frac_bits,
            n_levels: p.n_levels,
            tie,
            product,
        })
    }

    /// Quantized gain `m·n_levels`.
    pub fn gain(&self) -> f64 {
        self.gain_raw as f64 * (-(self.frac_bits as f64)).exp2()
    }

    pub fn n_levels(&self) -> i32 {
        self.n_levels
    }

    /// Scaled reference `sample · gain` in the sample's fixed-point width.
    #[inline]
    pub fn scaled_raw(&self, sample_raw: i64) -> i64 {
        let prod = sample_raw as i128 * self.gain_raw as i128;
        (match self.product {
            ProductRounding::Truncate => prod >> self.frac_bits,
            ProductRounding::Nearest => round_shift(prod, self.frac_bits, self.tie),
        }) as i64
    }

    /// Level for a raw sample in the modulator's sample format.
    #[inline]
    pub fn level(&self, sample_raw: i64) -> LevelCommand {
        let v = round_shift(
            self.scaled_raw(sample_raw) as i128,
            self.frac_bits,
            self.tie,
        ) as i64;
        v.clamp(-(self.n_levels as i64), self.n_levels as i64) as LevelCommand
    }

    /// Appends one level per raw sample.
    pub fn modulate_into(&self, samples_raw: &[i64], out: &mut Vec<LevelCommand>) {
        out.extend(samples_raw.iter().map(|&s| self.level(s)));
    }
}

/// Nearest level for one sample, with truncating product requantization.
pub fn nlm(sample: FixedValue, p: ModulationParams, tie: TieRule) -> Result<LevelCommand> {
    let m = Modulator::new(p, sample.format(), tie, ProductRounding::Truncate)?;
    Ok(m.level(sample.raw() as i64))
}

/// Outcome of one adaptive cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleOutcome {
    /// Sum of the levels emitted in this cycle.
    pub sum: i64,
    /// Whether the final correction hit the level bound.
    pub clamped: bool,
    /// Net level carried into the next cycle (nonzero only after a clamp).
    pub residual: i64,
}

/// Levels of one adaptive cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptiveCycle {
    pub levels: Vec<LevelCommand>,
    pub outcome: CycleOutcome,
}

/// Nearest-level modulator that zeroes the level sum of each output cycle.
///
/// If the required correction exceeds the level bound, the last level is
/// clamped and the remaining net value is carried into the next cycle's
/// accumulator.
#[derive(Debug, Clone)]
pub struct AdaptiveNlm {
    modulator: Modulator,
    carry: i64,
    cycles: u64,
    clamps: u64,
}

impl AdaptiveNlm {
    pub fn new(modulator: Modulator) -> Self {
        Self {
            modulator,
            carry: 0,
            cycles: 0,
            clamps: 0,
        }
    }

    pub fn modulator(&self) -> &Modulator {
        &self.modulator
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Cycles in which the correction was clamped.
    pub fn clamps(&self) -> u64 {
        self.clamps
    }

    /// Net level currently carried into the next cycle.
    pub fn carry(&self) -> i64 {
        self.carry
    }

    /// Modulates one output cycle of raw samples, appending its levels to `out`.
    pub fn modulate_cycle_into(
        &mut self,
        samples_raw: &[i64],
        out: &mut Vec<LevelCommand>,
    ) -> CycleOutcome {
        let Some((&last, head)) = samples_raw.split_last() else {
            return CycleOutcome::default();
        };
        let start = out.len();
        let mut acc = self.carry;
        for &s in head {
            let l = self.modulator.level(s);
            acc += l as i64;
            out.push(l);
        }
        let n = self.modulator.n_levels as i64;
        let wanted = if head.is_empty() {
            self.modulator.level(last) as i64
        } else {
            -acc
        };
        let clamped = wanted.abs() > n;
        let l = wanted.clamp(-n, n);
        out.push(l as LevelCommand);
        self.carry = acc + l;
        if head.is_empty() {
            self.carry = 0;
        }
        self.cycles += 1;
        self.clamps += clamped as u64;
        let sum = out[start..].iter().map(|&l| l as i64).sum();
        CycleOutcome {
            sum,
            clamped,
            residual: self.carry,
        }
    }
}

/// Adaptive modulation of a single cycle with an empty accumulator.
pub fn nlm_adaptive_cycle(
    samples: &[FixedValue],
    p: ModulationParams,
    tie: TieRule,
) -> Result<AdaptiveCycle> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "an adaptive cycle needs at least two samples".into(),
        ));
    }
    let fmt = samples[0].format();
    let mut a = AdaptiveNlm::new(Modulator::new(p, fmt, tie, ProductRounding::Truncate)?);
    let raw: Vec<i64> = samples.iter().map(|s| s.raw() as i64).collect();
    let mut levels = Vec::with_capacity(raw.len());
    let outcome = a.modulate_cycle_into(&raw, &mut levels);
    Ok(AdaptiveCycle { levels, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fmt() -> QFormat {
        QFormat::default()
    }

    fn fv(x: f64) -> FixedValue {
        quantize(x, fmt(), TieRule::AwayFromZero).value
    }

    fn p(m: f64) -> ModulationParams {
        ModulationParams::new(m, 7).unwrap()
    }

    /// Samples whose plain levels are exactly `levels` (level/7 at m = 1).
    fn samples_for(levels: &[i32]) -> Vec<FixedValue> {
        levels.iter().map(|&l| fv(l as f64 / 7.0)).collect()
    }

    #[test]
    fn nlm_examples() {
        let t = TieRule::AwayFromZero;
        assert_eq!(nlm(fv(0.0), p(0.7), t).unwrap(), 0);
        assert_eq!(nlm(fv(0.95), p(1.0), t).unwrap(), 7);
        assert_eq!(nlm(fv(-0.5), p(0.5), t).unwrap(), -2);
        assert_eq!(nlm(fv(1.0), p(1.0), t).unwrap(), 7);
        assert_eq!(nlm(fv(-1.0), p(1.0), t).unwrap(), -7);
    }

    #[test]
    fn params_validation() {
        assert!(ModulationParams::new(1.1, 7).is_err());
        assert!(ModulationParams::new(-0.1, 7).is_err());
        assert!(ModulationParams::new(0.5, 0).is_err());
    }

    #[test]
    fn gain_is_quantized_and_wide_level_counts_fit() {
        let m = Modulator::new(
            p(0.3),
            fmt(),
            TieRule::AwayFromZero,
            ProductRounding::Truncate,
        )
        .unwrap();
        assert!((m.gain() - 2.1).abs() <= fmt().step() / 2.0);
        let wide = ModulationParams::new(1.0, 63).unwrap();
        let m = Modulator::new(
            wide,
            fmt(),
            TieRule::AwayFromZero,
            ProductRounding::Truncate,
        )
        .unwrap();
        assert_eq!(m.level(fv(1.0).raw() as i64), 63);
    }

    #[test]
    fn product_requantization() {
        let m_t = Modulator::new(
            p(1.0),
            fmt(),
            TieRule::AwayFromZero,
            ProductRounding::Truncate,
        )
        .unwrap();
        let m_n = Modulator::new(
            p(1.0),
            fmt(),
            TieRule::AwayFromZero,
            ProductRounding::Nearest,
        )
        .unwrap();
        for raw in -20000i64..20000 {
            let exact = raw as f64 * 7.0 / 16384.0;
            let t = m_t.scaled_raw(raw) as f64 / 16384.0;
            let n = m_n.scaled_raw(raw) as f64 / 16384.0;
            assert_eq!(t, exact, "7 has no fractional bits, products are exact");
            assert_eq!(n, exact);
        }
        let m3 = Modulator::new(
            p(0.3),
            fmt(),
            TieRule::AwayFromZero,
            ProductRounding::Truncate,
        )
        .unwrap();
        let raw = -12345i64;
        let prod = raw as i128 * (m3.gain() * 16384.0) as i128;
        assert_eq!(m3.scaled_raw(raw) as i128, prod.div_euclid(16384));
    }

    #[test]
    fn adaptive_corrects_last_level() {
        let s = samples_for(&[3, 5, 3, 0, -3, -5, -4]);
        let c = nlm_adaptive_cycle(&s, p(1.0), TieRule::AwayFromZero).unwrap();
        assert_eq!(c.levels, vec![3, 5, 3, 0, -3, -5, -3]);
        assert_eq!(c.outcome.sum, 0);
        assert!(!c.outcome.clamped);
    }

    #[test]
    fn adaptive_leaves_balanced_cycles_alone() {
        let s = samples_for(&[2, 6, 7, 0, -7, -6, -2]);
        let c = nlm_adaptive_cycle(&s, p(1.0), TieRule::AwayFromZero).unwrap();
        assert_eq!(c.levels, vec![2, 6, 7, 0, -7, -6, -2]);
    }

    #[test]
    fn adaptive_clamps_and_carries() {
        let modulator = Modulator::new(
            p(1.0),
            fmt(),
            TieRule::AwayFromZero,
            ProductRounding::Truncate,
        )
        .unwrap();
        let mut a = AdaptiveNlm::new(modulator);
        let raw: Vec<i64> = samples_for(&[7, 7, 0])
            .iter()
            .map(|v| v.raw() as i64)
            .collect();
        let mut out = Vec::new();
        let o = a.modulate_cycle_into(&raw, &mut out);
        assert_eq!(out, vec![7, 7, -7]);
        assert!(o.clamped);
        assert_eq!(o.residual, 7);
        let zero: Vec<i64> = samples_for(&[0, 0, 0])
            .iter()
            .map(|v| v.raw() as i64)
            .collect();
        out.clear();
        let o = a.modulate_cycle_into(&zero, &mut out);
        assert_eq!(out, vec![0, 0, -7]);
        assert!(!o.clamped);
        assert_eq!(o.residual, 0);
        assert_eq!(a.clamps(), 1);
        assert_eq!(a.cycles(), 2);
    }

    #[test]
    fn adaptive_rejects_single_sample() {
        assert!(nlm_adaptive_cycle(&[fv(0.1)], p(1.0), TieRule::AwayFromZero).is_err());
    }

    proptest! {
        #[test]
        fn adaptive_differs_only_in_last_sample(
            xs in prop::collection::vec(-1.0f64..1.0, 2..64),
            m in 0.0f64..1.0,
        ) {
            let s: Vec<FixedValue> = xs.iter().map(|&x| fv(x)).collect();
            let params = p(m);
            let plain: Vec<i32> = s.iter().map(|&v| nlm(v, params, TieRule::AwayFromZero).unwrap()).collect();
            let c = nlm_adaptive_cycle(&s, params, TieRule::AwayFromZero).unwrap();
            let k = s.len();
            prop_assert_eq!(&c.levels[..k - 1], &plain[..k - 1]);
            if !c.outcome.clamped {
                prop_assert_eq!(c.levels.iter().map(|&l| l as i64).sum::<i64>(), 0);
            }
            if plain.iter().map(|&l| l as i64).sum::<i64>() == 0 {
                prop_assert_eq!(&c.levels, &plain);
            }
            prop_assert!(c.levels.iter().all(|l| l.abs() <= 7));
        }

        #[test]
        fn levels_stay_in_bounds(x in -1.0f64..1.0, m in 0.0f64..1.0, n in 1i32..20) {
            let params = ModulationParams::new(m, n).unwrap();
            let l = nlm(fv(x), params, TieRule::HalfUp).unwrap();
            prop_assert!(l.abs() <= n);
            // within one level of the ideal value
            prop_assert!((l as f64 - x * m * n as f64).abs() <= 0.5 + 1e-3 * n as f64);
        }

        #[test]
        fn nearest_product_is_odd_symmetric(raw in -16384i64..16384, m in 0.0f64..1.0) {
            let md = Modulator::new(p(m), fmt(), TieRule::AwayFromZero, ProductRounding::Nearest).unwrap();
            prop_assert_eq!(md.level(-raw), -md.level(raw));
        }
    }
}
