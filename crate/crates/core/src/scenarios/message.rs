//! Bitmaps written into the current spectrogram, one channel per row and
//! one time slot per column, and read back.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ChannelSpec, Config, MessageConfig};
use super::multitone::Multitone;
use super::{check_levels, Controller, Recorder, TimeRow};
use crate::analysis::{spectrogram_with, SpectrogramMatrix, WaveformRecord};
use crate::converter::{Converter, ConverterStats};
use crate::error::{Error, Result};

/// Rows × columns of bits; row `r` drives channel `r`, column `c` time slot `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    rows: usize,
    columns: usize,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(rows: usize, columns: usize) -> Self {
        Self {
            rows,
            columns,
            bits: vec![false; rows * columns],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.columns + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.columns + c] = v;
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Parses one row per line of `0`/`1`; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let Some(first) = lines.first() else {
            return Err(Error::InvalidParameter("bitmap is empty".into()));
        };
        let columns = first.len();
        let mut bits = Vec::with_capacity(lines.len() * columns);
        for (i, line) in lines.iter().enumerate() {
            if line.len() != columns {
                return Err(Error::InvalidParameter(format!(
                    "bitmap row {} has {} columns, expected {columns}",
                    i + 1,
                    line.len()
                )));
            }
            for ch in line.chars() {
                bits.push(match ch {
                    '0' => false,
                    '1' => true,
                    _ => {
                        return Err(Error::InvalidParameter(format!(
                            "bitmap row {} has character {ch:?}",
                            i + 1
                        )))
                    }
                });
            }
        }
        Ok(Self {
            rows: lines.len(),
            columns,
            bits,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Uniformly random bits from a seeded generator.
    pub fn random(rows: usize, columns: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            rows,
            columns,
            bits: (0..rows * columns).map(|_| rng.gen_bool(0.5)).collect(),
        }
    }

    /// A 23 × 73 picture in the manner of the 1974 Arecibo message, laid on
    /// its side: picture line `y` (top to bottom) is column `y`, picture
    /// column `x` is row `x`.
    pub fn arecibo() -> Self {
        let pic = arecibo_picture();
        let mut b = Self::new(PIC_W, PIC_H);
        for (y, line) in pic.iter().enumerate() {
            for (x, &v) in line.iter().enumerate() {
                b.set(x, y, v);
            }
        }
        b
    }

    /// Fraction of equal pixels; bitmaps of different shape score 0.
    pub fn accuracy(&self, other: &Bitmap) -> f64 {
        if self.rows != other.rows || self.columns != other.columns || self.bits.is_empty() {
            return 0.0;
        }
        let same = self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.bits.len() as f64
    }
}

impl fmt::Display for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.columns {
                f.write_str(if self.get(r, c) { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

const PIC_W: usize = 23;
const PIC_H: usize = 73;

type Picture = [[bool; PIC_W]; PIC_H];

/// Writes `value` as a vertical binary number, most significant bit on top,
/// bottom bit at line `y_bottom`.
fn vertical_number(pic: &mut Picture, x: usize, y_bottom: usize, bits: usize, value: u64) {
    for b in 0..bits {
        pic[y_bottom - b][x] = (value >> b) & 1 == 1;
    }
}

fn sprite(pic: &mut Picture, x0: usize, y0: usize, rows: &[&str]) {
    for (dy, row) in rows.iter().enumerate() {
        for (dx, ch) in row.chars().enumerate() {
            if ch == '#' {
                pic[y0 + dy][x0 + dx] = true;
            }
        }
    }
}

#[allow(clippy::needless_range_loop)] // pixel coordinates
fn arecibo_picture() -> Picture {
    let mut pic = [[false; PIC_W]; PIC_H];

    // counting 1..10, with a marker under each number's lowest bit
    for n in 1..=10u64 {
        let x = 2 * n as usize - 1;
        vertical_number(&mut pic, x, 3, 4, n);
        pic[4][x] = true;
    }

    // atomic numbers of H, C, N, O, P
    for (i, z) in [1u64, 6, 7, 8, 15].into_iter().enumerate() {
        let x = 3 + 4 * i;
        vertical_number(&mut pic, x, 9, 4, z);
        pic[10][x] = true;
    }

    // twelve formulas, each five element counts side by side
    let formulas: [[u64; 5]; 12] = [
        [7, 5, 0, 1, 0],
        [4, 5, 5, 0, 0],
        [5, 5, 2, 2, 0],
        [7, 5, 0, 1, 0],
        [0, 0, 0, 4, 1],
        [0, 0, 0, 4, 1],
        [7, 5, 0, 1, 0],
        [4, 4, 3, 1, 0],
        [4, 5, 5, 1, 0],
        [7, 5, 0, 1, 0],
        [0, 0, 0, 4, 1],
        [0, 0, 0, 4, 1],
    ];
    for (i, f) in formulas.iter().enumerate() {
        let (band, slot) = (i / 4, i % 4);
        let y_bottom = 15 + 6 * band;
        for (e, &count) in f.iter().enumerate() {
            vertical_number(&mut pic, slot * 6 + e, y_bottom, 4, count);
        }
    }

    // double helix with a 32-bit count down its axis
    for y in 31..=46 {
        let phase = (y - 31) as f64 * std::f64::consts::TAU / 16.0;
        let dx = (4.5 * phase.cos()).round() as i64;
        pic[y][(11 + dx) as usize] = true;
        pic[y][(11 - dx) as usize] = true;
    }
    for b in 0..32 {
        let (y, x) = (32 + b / 2, 10 + b % 2 * 2);
        pic[y][x] = (4_294_441_822u64 >> b) & 1 == 1;
    }

    // figure, its height to the left and a population to the right
    sprite(
        &mut pic,
        8,
        48,
        &[
            "  ###  ", "  ###  ", "#######", "# ### #", "# ### #", "  # #  ", "  # #  ", " ## ## ",
        ],
    );
    for y in 48..=55 {
        pic[y][2] = true;
    }
    vertical_number(&mut pic, 3, 54, 4, 14);
    for b in 0..24 {
        pic[48 + b / 3][18 + b % 3] = (4_292_853_750u64 >> b) & 1 == 1;
    }

    // nine bodies, the third raised
    for i in 0..9 {
        let x = 2 + 2 * i;
        let y = if i == 2 { 57 } else { 58 };
        pic[y][x] = true;
    }

    // dish and focus
    sprite(
        &mut pic,
        3,
        60,
        &[
            "#               #",
            "##             ##",
            " ##           ## ",
            "  ###       ###  ",
            "    #########    ",
            "        #        ",
            "       ###       ",
            "      #####      ",
        ],
    );

    // its size along the bottom
    for b in 0..12 {
        pic[70 + b / 12][20 - b] = (2430u64 >> b) & 1 == 1;
    }
    for x in 8..=20 {
        pic[72][x] = true;
    }
    pic
}

/// Where each channel sits and how long each column lasts.
///
/// The lit channels of a column share the whole level range equally, so a
/// sparse column is as loud as a dense one and a lone pixel still clears
/// the quantizer. The all-on calibration column plays every channel at the
/// quietest amplitude any pixel can have.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageLayout {
    pub frequencies: Vec<f64>,
    pub column_duration: f64,
    /// Number of calibration columns ahead of the bitmap (0 or 2).
    pub calibration_columns: usize,
    /// Summed amplitude of a column's lit channels (levels).
    pub level_range: f64,
}

impl MessageLayout {
    pub fn from_config(spec: &MessageConfig, rows: usize, n_levels: i32) -> Self {
        Self {
            frequencies: (0..rows)
                .map(|r| spec.channel_start + r as f64 * spec.channel_step)
                .collect(),
            column_duration: spec.column_duration,
            calibration_columns: if spec.calibration { 2 } else { 0 },
            level_range: n_levels as f64 * spec.headroom,
        }
    }

    /// Per-channel amplitude in a column with `lit` channels on.
    pub fn amplitude(&self, lit: usize) -> f64 {
        self.level_range / lit.max(1) as f64
    }

    /// Channel plan playing `bitmap`, one span per run of set bits at
    /// constant amplitude.
    pub fn channels(&self, bitmap: &Bitmap) -> Vec<ChannelSpec> {
        let tc = self.column_duration;
        let cal = self.calibration_columns;
        let amps: Vec<f64> = (0..bitmap.columns())
            .map(|c| self.amplitude((0..bitmap.rows()).filter(|&r| bitmap.get(r, c)).count()))
            .collect();
        let mut out = Vec::new();
        for (r, &frequency) in self.frequencies.iter().enumerate() {
            let mut on = |c0: usize, c1: usize, amplitude: f64| {
                out.push(ChannelSpec {
                    frequency,
                    amplitude,
                    start: c0 as f64 * tc,
                    end: c1 as f64 * tc,
                })
            };
            if cal > 0 {
                on(0, 1, self.amplitude(self.frequencies.len()));
            }
            let mut c = 0;
            while c < bitmap.columns() {
                if bitmap.get(r, c) {
                    let s = c;
                    while c < bitmap.columns() && bitmap.get(r, c) && amps[c] == amps[s] {
                        c += 1;
                    }
                    on(cal + s, cal + c, amps[s]);
                } else {
                    c += 1;
                }
            }
        }
        out
    }

    pub fn total_columns(&self, bitmap: &Bitmap) -> usize {
        self.calibration_columns + bitmap.columns()
    }
}

/// Per-column channel amplitudes read from a spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub bitmap: Bitmap,
    /// `amplitudes[row][column]`, bitmap columns only.
    pub amplitudes: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

/// Averages each channel's amplitude over the frames lying wholly inside
/// each column and thresholds it.
#[allow(clippy::needless_range_loop)] // row × column grid
pub fn decode(
    spec: &SpectrogramMatrix,
    layout: &MessageLayout,
    columns: usize,
) -> Result<DecodeResult> {
    let fs = spec.sample_rate;
    let col_samples = (layout.column_duration * fs).round() as usize;
    let mean_amp = |row: usize, col: usize| -> Result<f64> {
        let (a, b) = (col * col_samples, (col + 1) * col_samples);
        let bin = spec.bin_of(layout.frequencies[row]);
        let mut sum = 0.0;
        let mut n = 0usize;
        for frame in 0..spec.times.len() {
            let s = spec.frame_start(frame);
            if s >= a && s + spec.window_len <= b {
                sum += spec.amplitude(frame, bin);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::InvalidParameter(format!(
                "no spectrogram frame fits inside column {col}; shorten the window below {col_samples} samples"
            )));
        }
        Ok(sum / n as f64)
    };
    let rows = layout.frequencies.len();
    let mut amplitudes = vec![vec![0.0; columns]; rows];
    let mut thresholds = vec![0.0; rows];
    let mut bitmap = Bitmap::new(rows, columns);
    for r in 0..rows {
        for c in 0..columns {
            amplitudes[r][c] = mean_amp(r, layout.calibration_columns + c)?;
        }
        thresholds[r] = if layout.calibration_columns >= 2 {
            0.5 * (mean_amp(r, 0)? + mean_amp(r, 1)?)
        } else {
            let hi = amplitudes[r]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let lo = amplitudes[r].iter().copied().fold(f64::INFINITY, f64::min);
            0.5 * (hi + lo)
        };
        for c in 0..columns {
            // a row that never changes cannot be split at its own midpoint;
            // an absolute floor keeps silent rows silent
            let on = amplitudes[r][c] > thresholds[r] && amplitudes[r][c] > SILENCE;
            bitmap.set(r, c, on);
        }
    }
    Ok(DecodeResult {
        bitmap,
        amplitudes,
        thresholds,
    })
}

/// Amplitudes below this (A) count as silence whatever the threshold.
const SILENCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct MessageResult {
    pub sent: Bitmap,
    pub decoded: DecodeResult,
    pub accuracy: f64,
    pub layout: MessageLayout,
    pub rows: Vec<TimeRow>,
    pub spectrogram: SpectrogramMatrix,
    pub stats: ConverterStats,
    pub clamps: u64,
}

/// Resolves the configured bitmap source.
pub fn message_bitmap(spec: &MessageConfig) -> Result<Bitmap> {
    match spec.bitmap.as_str() {
        "arecibo" => Ok(Bitmap::arecibo()),
        "random" => Ok(Bitmap::random(spec.rows, spec.columns, spec.seed)),
        path => Bitmap::load(Path::new(path)),
    }
}

pub fn run_message(cfg: &Config) -> Result<MessageResult> {
    run_message_with(cfg, &message_bitmap(&cfg.message)?)
}

pub fn run_message_with(cfg: &Config, bitmap: &Bitmap) -> Result<MessageResult> {
    check_levels(cfg.controller.levels, cfg.converter.n_modules)?;
    let spec = &cfg.message;
    let ctrl = Controller::new(&cfg.controller)?;
    let fs = ctrl.f_clock;
    let sp = spec.spectrogram;
    if bitmap.rows() > 1 {
        let required = (2.0 * fs / spec.channel_step).ceil() as usize;
        if sp.window_len < required {
            return Err(Error::SpectrogramResolution {
                spacing: spec.channel_step,
                required_window: required,
            });
        }
    }
    let layout = MessageLayout::from_config(spec, bitmap.rows(), ctrl.n_levels);
    let col_clocks = spec.column_duration * fs;
    if sp.window_len as f64 > col_clocks {
        return Err(Error::InvalidParameter(format!(
            "spectrogram window {} exceeds the {col_clocks}-clock column",
            sp.window_len
        )));
    }
    let channels = layout.channels(bitmap);
    let duration = layout.total_columns(bitmap) as f64 * spec.column_duration;
    // a silent plan still needs a base period: add a muted channel
    let mut plan_channels = channels.clone();
    plan_channels.extend(layout.frequencies.iter().map(|&frequency| ChannelSpec {
        frequency,
        amplitude: 0.0,
        start: 0.0,
        end: 0.0,
    }));
    let plan = Multitone::new(&ctrl, &plan_channels, Some(1.0), Some(duration))?;
    let per_column = col_clocks / plan.k_base() as f64;
    if (per_column - per_column.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "column of {col_clocks} clocks is not a whole number of {}-clock base periods",
            plan.k_base()
        )));
    }

    let converter = Converter::new(cfg.converter, cfg.load, fs)?;
    let mut rec = Recorder::new(converter, spec.time_series_stride, false);
    let clamps = plan.run(&ctrl, |l| rec.step(l).map(|_| ()))?;
    let current = std::mem::take(&mut rec.current);
    let spectrogram =
        spectrogram_with(&WaveformRecord::new(fs, current, plan.base_frequency()), sp)?;
    let decoded = decode(&spectrogram, &layout, bitmap.columns())?;
    Ok(MessageResult {
        sent: bitmap.clone(),
        accuracy: bitmap.accuracy(&decoded.bitmap),
        decoded,
        layout,
        stats: *rec.stats(),
        rows: rec.rows,
        spectrogram,
        clamps,
    })
}
