use std::f64::consts::TAU;

use super::WaveformRecord;
use crate::error::{Error, Result};

/// Fundamental against everything else (harmonics, noise and DC).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionReport {
    pub fundamental_rms: f64,
    pub residual_rms: f64,
    /// `residual_rms / fundamental_rms`.
    pub total_distortion: f64,
}

impl DistortionReport {
    fn from_mean_squares(total_ms: f64, fund_ms: f64) -> Self {
        let fundamental_rms = fund_ms.max(0.0).sqrt();
        let residual_rms = (total_ms - fund_ms).max(0.0).sqrt();
        let total_distortion = if fundamental_rms > 0.0 {
            residual_rms / fundamental_rms
        } else {
            f64::INFINITY
        };
        Self {
            fundamental_rms,
            residual_rms,
            total_distortion,
        }
    }
}

/// THD+N with the fundamental taken by single-bin correlation at `f_o`.
///
/// Exact when the record holds a whole number of periods of `f_o`.
pub fn total_distortion(rec: &WaveformRecord) -> Result<DistortionReport> {
    let n = rec.samples.len();
    if n == 0 || rec.f_o <= 0.0 || rec.cycles() < 1.0 {
        return Err(Error::BelowResolution(rec.f_o));
    }
    let w = TAU * rec.f_o / rec.sample_rate;
    let (mut c, mut s, mut e) = (0.0, 0.0, 0.0);
    for (i, &x) in rec.samples.iter().enumerate() {
        let (sn, cs) = (w * i as f64).sin_cos();
        c += x * cs;
        s += x * sn;
        e += x * x;
    }
    let a = 2.0 * c / n as f64;
    let b = 2.0 * s / n as f64;
    Ok(DistortionReport::from_mean_squares(
        e / n as f64,
        (a * a + b * b) / 2.0,
    ))
}

/// Energy split of one output cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleEnergy {
    /// Σx² over the cycle.
    pub total: f64,
    /// Energy of the cycle's own fundamental (DFT bin 1 over its length).
    pub fundamental: f64,
}

impl CycleEnergy {
    /// Aggregate distortion of several cycles.
    pub fn report(parts: &[CycleEnergy], samples: usize) -> DistortionReport {
        let total: f64 = parts.iter().map(|p| p.total).sum();
        let fund: f64 = parts.iter().map(|p| p.fundamental).sum();
        let n = samples.max(1) as f64;
        DistortionReport::from_mean_squares(total / n, fund / n)
    }
}

/// Splits one cycle of `samples` (exactly one period long) into its
/// fundamental and the rest.
pub fn cycle_distortion(samples: &[f64]) -> CycleEnergy {
    let k = samples.len();
    if k < 3 {
        let total = samples.iter().map(|x| x * x).sum();
        return CycleEnergy {
            total,
            fundamental: 0.0,
        };
    }
    let w = TAU / k as f64;
    let (mut c, mut s, mut e) = (0.0, 0.0, 0.0);
    for (i, &x) in samples.iter().enumerate() {
        let (sn, cs) = (w * i as f64).sin_cos();
        c += x * cs;
        s += x * sn;
        e += x * x;
    }
    CycleEnergy {
        total: e,
        fundamental: 2.0 * (c * c + s * s) / k as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 1e6;

    #[test]
    fn pure_sine_has_no_distortion() {
        let x: Vec<f64> = (0..10_000)
            .map(|i| 3.0 * (TAU * 1000.0 * i as f64 / FS).sin())
            .collect();
        let r = total_distortion(&WaveformRecord::new(FS, x, 1000.0)).unwrap();
        assert!(r.total_distortion < 1e-6);
        assert!((r.fundamental_rms - 3.0 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn square_wave_distortion() {
        let per = 1000;
        let x: Vec<f64> = (0..per * 20)
            .map(|i| if i % per < per / 2 { 1.0 } else { -1.0 })
            .collect();
        let r = total_distortion(&WaveformRecord::new(FS, x, FS / per as f64)).unwrap();
        let expected = (std::f64::consts::PI.powi(2) / 8.0 - 1.0).sqrt();
        assert!(
            (r.total_distortion - expected).abs() < 1e-2,
            "{}",
            r.total_distortion
        );
    }

    #[test]
    fn fifteen_level_staircase_is_below_bound() {
        // brute-force oracle: build the staircase, remove the fitted sine by
        // least squares and measure what is left
        for k in [20usize, 33, 100, 1000] {
            let x: Vec<f64> = (0..k)
                .map(|i| (7.0 * ((i as f64 + 0.5) * TAU / k as f64 - TAU / 4.0).sin()).round())
                .collect();
            let rec = WaveformRecord::new(FS, x.repeat(16), FS / k as f64);
            let r = total_distortion(&rec).unwrap();
            let ce = cycle_distortion(&x);
            let c = CycleEnergy::report(&[ce], k);
            assert!((c.total_distortion - r.total_distortion).abs() < 1e-9);
            assert!(r.total_distortion < 0.184, "K={k}: {}", r.total_distortion);
            assert!(r.total_distortion > 0.01);
        }
    }

    #[test]
    fn dc_counts_as_distortion() {
        let x: Vec<f64> = (0..1000)
            .map(|i| 0.5 + (TAU * i as f64 / 100.0).sin())
            .collect();
        let r = total_distortion(&WaveformRecord::new(FS, x, FS / 100.0)).unwrap();
        assert!((r.total_distortion - 0.5 / (0.5f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn too_short_record_is_rejected() {
        let rec = WaveformRecord::new(FS, vec![1.0; 100], 100.0);
        assert!(total_distortion(&rec).is_err());
    }

    #[test]
    fn removing_the_fundamental_leaves_zero_fundamental() {
        let x: Vec<f64> = (0..2000)
            .map(|i| (TAU * i as f64 / 200.0).sin() + 0.3 * (TAU * 3.0 * i as f64 / 200.0).sin())
            .collect();
        let only_harmonic: Vec<f64> = (0..2000)
            .map(|i| 0.3 * (TAU * 3.0 * i as f64 / 200.0).sin())
            .collect();
        let r = total_distortion(&WaveformRecord::new(FS, x, FS / 200.0)).unwrap();
        assert!((r.total_distortion - 0.3).abs() < 1e-9);
        let h = total_distortion(&WaveformRecord::new(FS, only_harmonic, FS / 200.0)).unwrap();
        assert!(h.fundamental_rms < 1e-12);
    }
}
