//! Fixed-point number emulation for the embedded controller.
//!
//! Values are stored as scaled integers (`raw × 2^-frac_bits`). Quantization
//! saturates at the format bounds instead of wrapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an exact half is resolved when rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Halves go away from zero; symmetric under negation.
    #[default]
    AwayFromZero,
    /// Halves go to the even neighbour.
    ToEven,
    /// Halves go towards +infinity; asymmetric under negation.
    HalfUp,
}

/// Word layout of a fixed-point number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    total_bits: u32,
    frac_bits: u32,
    signed: bool,
}

impl QFormat {
    pub fn new(total_bits: u32, frac_bits: u32, signed: bool) -> Result<Self> {
        if frac_bits < 1 || frac_bits >= total_bits || total_bits > 64 {
            return Err(Error::InvalidFormat(format!(
                "need 1 <= frac_bits < total_bits <= 64, got Q({total_bits},{frac_bits})"
            )));
        }
        Ok(Self {
            total_bits,
            frac_bits,
            signed,
        })
    }

    /// Signed format with `total_bits` bits of which `frac_bits` are fractional.
    pub fn signed(total_bits: u32, frac_bits: u32) -> Result<Self> {
        Self::new(total_bits, frac_bits, true)
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Resolution, `2^-frac_bits`.
    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Raw value of 1.0.
    pub fn one_raw(&self) -> i128 {
        1i128 << self.frac_bits
    }

    pub fn min_raw(&self) -> i128 {
        if self.signed {
            -(1i128 << (self.total_bits - 1))
        } else {
            0
        }
    }

    pub fn max_raw(&self) -> i128 {
        if self.signed {
            (1i128 << (self.total_bits - 1)) - 1
        } else {
            (1i128 << self.total_bits) - 1
        }
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.step()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.step()
    }

    /// Wraps a raw integer, saturating it into range.
    pub fn from_raw(&self, raw: i128) -> FixedValue {
        FixedValue {
            raw: raw.clamp(self.min_raw(), self.max_raw()),
            format: *self,
        }
    }
}

impl Default for QFormat {
    /// Q(18,14), the default for reference samples.
    fn default() -> Self {
        Self {
            total_bits: 18,
            frac_bits: 14,
            signed: true,
        }
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = if self.signed { "Q" } else { "UQ" };
        write!(f, "{prefix}{}.{}", self.total_bits, self.frac_bits)
    }
}

impl FromStr for QFormat {
    type Err = Error;

    /// Parses `Q18.14` (signed) or `UQ16.12` (unsigned): total bits, then fractional bits.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let (signed, body) = if let Some(b) = t.strip_prefix("UQ") {
            (false, b)
        } else if let Some(b) = t.strip_prefix('Q') {
            (true, b)
        } else {
            return Err(Error::InvalidFormat(format!(
                "expected Q<total>.<frac>, got {s:?}"
            )));
        };
        let (total, frac) = body
            .split_once(['.', ','])
            .ok_or_else(|| Error::InvalidFormat(format!("expected Q<total>.<frac>, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidFormat(format!("bad bit count in {s:?}")))
        };
        Self::new(parse(total)?, parse(frac)?, signed)
    }
}

impl Serialize for QFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A number held in a [`QFormat`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedValue {
    raw: i128,
    format: QFormat,
}

impl FixedValue {
    pub fn raw(&self) -> i128 {
        self.raw
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.step()
    }
}

impl fmt::Display for FixedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Result of [`quantize`]: the value and whether it hit a format bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub value: FixedValue,
    pub saturated: bool,
}

/// Rounds a real number to an integer under `tie`.
pub fn round_f64(x: f64, tie: TieRule) -> f64 {
    match tie {
        TieRule::AwayFromZero => x.round(),
        TieRule::ToEven => x.round_ties_even(),
        TieRule::HalfUp => {
            let fl = x.floor();
            if x - fl >= 0.5 {
                fl + 1.0
            } else {
                fl
            }
        }
    }
}

/// Nearest representable value of `x` in `fmt`, saturating at the bounds.
pub fn quantize(x: f64, fmt: QFormat, tie: TieRule) -> Quantized {
    debug_assert!(x.is_finite(), "quantize of non-finite value");
    let scaled = round_f64(x * (fmt.frac_bits as f64).exp2(), tie);
    let (lo, hi) = (fmt.min_raw(), fmt.max_raw());
    let raw = if scaled <= lo as f64 {
        lo
    } else if scaled >= hi as f64 {
        hi
    } else {
        scaled as i128
    };
    let saturated = (raw as f64) != scaled;
    Quantized {
        value: FixedValue { raw, format: fmt },
        saturated,
    }
}

/// Divides `raw` by `2^shift` and rounds to the nearest integer under `tie`.
pub fn round_shift(raw: i128, shift: u32, tie: TieRule) -> i128 {
    if shift == 0 {
        return raw;
    }
    let half = 1i128 << (shift - 1);
    let floor = raw >> shift;
    let rem = raw - (floor << shift);
    match rem.cmp(&half) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => match tie {
            TieRule::HalfUp => floor + 1,
            TieRule::ToEven => floor + (floor & 1),
            TieRule::AwayFromZero => {
                if raw < 0 {
                    floor
                } else {
                    floor + 1
                }
            }
        },
    }
}

/// Nearest integer to a fixed-point value.
pub fn round_to_integer(v: FixedValue, tie: TieRule) -> i64 {
    round_shift(v.raw, v.format.frac_bits, tie) as i64
}
