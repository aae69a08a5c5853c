//! CSV, PGM and plain-text writers.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! results always give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::chirp::ChirpResult;
use super::message::MessageResult;
use super::mix::MixResult;
use super::simulate::SimulateResult;
use super::sweep::{MethodMap, SweepResult};
use super::TimeRow;
use crate::analysis::{AmplitudeSpectrum, Category, SpectrogramMatrix};
use crate::converter::ConverterStats;
use crate::error::Result;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Classification map: one row per cell.
pub fn write_map_csv(path: &Path, map: &MethodMap) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "f_Hz,m,category,dc_metric,lf_ratio,lf_peak_Hz")?;
    for c in &map.cells {
        let r = &c.classification;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.f_hz,
            c.m,
            r.category.label(),
            r.dc_metric,
            r.lf_metric,
            r.lf_peak_frequency.unwrap_or(0.0)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Time series: time, level, output voltage, load current, module voltages.
pub fn write_time_series(path: &Path, rows: &[TimeRow]) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "time_s,level,v_out_V,i_load_A")?;
    let n = rows.first().map_or(0, |r| r.module_voltages.len());
    for j in 1..=n {
        write!(w, ",v_module_{j}_V")?;
    }
    writeln!(w)?;
    for r in rows {
        write!(w, "{},{},{},{}", r.time, r.level, r.v_out, r.i_load)?;
        for v in &r.module_voltages {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Spectrogram matrix: a header of frequencies, then one row per frame
/// starting with its time; cells in dB.
pub fn write_spectrogram_csv(path: &Path, s: &SpectrogramMatrix) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "time_s")?;
    for f in &s.frequencies {
        write!(w, ",{f}")?;
    }
    writeln!(w)?;
    for (t, row) in s.times.iter().zip(&s.magnitudes) {
        write!(w, "{t}")?;
        for m in row {
            write!(w, ",{m}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary graymap: time left to right, frequency bottom to top, 80 dB range.
pub fn write_spectrogram_pgm(path: &Path, s: &SpectrogramMatrix) -> Result<()> {
    let (width, height) = (s.times.len(), s.frequencies.len());
    let top = s
        .magnitudes
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = top - 80.0;
    let mut w = create(path)?;
    write!(w, "P5\n{width} {height}\n255\n")?;
    let mut line = vec![0u8; width];
    for bin in (0..height).rev() {
        for (frame, px) in line.iter_mut().enumerate() {
            let v = ((s.magnitudes[frame][bin] - floor) / 80.0).clamp(0.0, 1.0);
            *px = (v * 255.0).round() as u8;
        }
        w.write_all(&line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_csv(path: &Path, s: &AmplitudeSpectrum) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "frequency_Hz,magnitude")?;
    for (f, m) in s.frequencies.iter().zip(&s.magnitudes) {
        writeln!(w, "{f},{m}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn converter_lines(s: &ConverterStats) -> String {
    format!(
        "steps: {}\ntransitions: {}\nbalancing_events: {}\nmax_voltage_spread: {}\npeak_output_voltage_V: {}\n\
         max_charge_error: {}\nmin_paralleling_loss_J: {}\nparalleling_loss_J: {}\nload_energy_J: {}\nsource_energy_J: {}\n",
        s.steps,
        s.transitions,
        s.balancing_events,
        s.max_spread,
        s.peak_voltage,
        s.max_charge_error,
        if s.min_event_loss.is_finite() { s.min_event_loss } else { 0.0 },
        s.paralleling_loss,
        s.load_energy,
        s.source_energy,
    )
}

fn spectrogram_files(
    dir: &Path,
    stem: &str,
    s: &SpectrogramMatrix,
    out: &mut Vec<PathBuf>,
) -> Result<()> {
    let csv = dir.join(format!("{stem}_spectrogram.csv"));
    write_spectrogram_csv(&csv, s)?;
    let pgm = dir.join(format!("{stem}_spectrogram.pgm"));
    write_spectrogram_pgm(&pgm, s)?;
    out.extend([csv, pgm]);
    Ok(())
}

pub fn sweep_summary(r: &SweepResult) -> String {
    let mut s =
        String::from("method,cells,ideal,dc-bias,lf-oscillation,cycles,nonzero_cycles,clamps\n");
    for m in &r.maps {
        s += &format!(
            "{},{},{},{},{},{},{},{}\n",
            m.method,
            m.cells.len(),
            m.count(Category::Ideal),
            m.count(Category::DcBias),
            m.count(Category::LfOscillation),
            m.cycles(),
            m.nonzero_cycles(),
            m.clamps()
        );
    }
    s
}

/// `sweep_<method>.csv` per method plus `sweep_summary.txt`.
pub fn write_sweep(dir: &Path, r: &SweepResult) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for m in &r.maps {
        let p = dir.join(format!("sweep_{}.csv", m.method));
        write_map_csv(&p, m)?;
        out.push(p);
    }
    let p = dir.join("sweep_summary.txt");
    write_text(&p, &sweep_summary(r))?;
    out.push(p);
    Ok(out)
}

pub fn chirp_summary(r: &ChirpResult) -> String {
    format!(
        "cycles: {}\nwindows: {}\nmax_voltage_distortion: {}\nmean_voltage_distortion: {}\n\
         max_current_distortion: {}\ncommanded_peak_V: {}\nmeasured_peak_V: {}\nclamps: {}\n{}",
        r.cycles,
        r.windows.len(),
        r.max_voltage_distortion(),
        r.mean_voltage_distortion(),
        r.windows
            .iter()
            .map(|w| w.current_distortion)
            .fold(0.0, f64::max),
        r.commanded_peak,
        r.measured_peak,
        r.clamps,
        converter_lines(&r.stats)
    )
}

pub fn write_chirp(dir: &Path, r: &ChirpResult) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let ts = dir.join("chirp_timeseries.csv");
    write_time_series(&ts, &r.rows)?;
    out.push(ts);
    spectrogram_files(dir, "chirp", &r.spectrogram, &mut out)?;
    let d = dir.join("chirp_distortion.csv");
    let mut w = create(&d)?;
    writeln!(
        w,
        "start_s,end_s,cycles,frequency_Hz,voltage_distortion,current_distortion,current_amplitude_A,max_spread"
    )?;
    for x in &r.windows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            x.start,
            x.end,
            x.cycles,
            x.frequency,
            x.voltage_distortion,
            x.current_distortion,
            x.current_amplitude,
            x.max_spread
        )?;
    }
    w.flush()?;
    out.push(d);
    let s = dir.join("chirp_summary.txt");
    write_text(&s, &chirp_summary(r))?;
    out.push(s);
    Ok(out)
}

pub fn mix_summary(r: &MixResult) -> String {
    let mut s = format!(
        "base_frequency_Hz: {}\nscale: {}\nclamps: {}\n",
        r.base_frequency, r.scale, r.clamps
    );
    for iv in &r.intervals {
        let active: Vec<String> = iv.active.iter().map(|f| f.to_string()).collect();
        s += &format!(
            "interval {}..{} s around {} s: {}\n",
            iv.start,
            iv.end,
            iv.instant,
            active.join(" ")
        );
    }
    s + &converter_lines(&r.stats)
}

pub fn write_mix(dir: &Path, r: &MixResult) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let ts = dir.join("mix_timeseries.csv");
    write_time_series(&ts, &r.rows)?;
    out.push(ts);
    spectrogram_files(dir, "mix", &r.spectrogram, &mut out)?;
    for iv in &r.intervals {
        let p = dir.join(format!(
            "mix_fft_{}us.csv",
            (iv.instant * 1e6).round() as i64
        ));
        write_spectrum_csv(&p, &iv.spectrum)?;
        out.push(p);
    }
    let s = dir.join("mix_summary.txt");
    write_text(&s, &mix_summary(r))?;
    out.push(s);
    Ok(out)
}

pub fn message_summary(r: &MessageResult) -> String {
    let wrong = r.sent.rows() * r.sent.columns()
        - (r.accuracy * (r.sent.rows() * r.sent.columns()) as f64).round() as usize;
    format!(
        "rows: {}\ncolumns: {}\npixel_accuracy: {}\nwrong_pixels: {}\nclamps: {}\n{}",
        r.sent.rows(),
        r.sent.columns(),
        r.accuracy,
        wrong,
        r.clamps,
        converter_lines(&r.stats)
    )
}

pub fn write_message(dir: &Path, r: &MessageResult) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let ts = dir.join("message_timeseries.csv");
    write_time_series(&ts, &r.rows)?;
    out.push(ts);
    spectrogram_files(dir, "message", &r.spectrogram, &mut out)?;
    let sent = dir.join("message_sent.txt");
    write_text(&sent, &r.sent.to_string())?;
    let decoded = dir.join("message_decoded.txt");
    write_text(&decoded, &r.decoded.bitmap.to_string())?;
    let amps = dir.join("message_amplitudes.csv");
    let mut w = create(&amps)?;
    writeln!(w, "frequency_Hz,threshold_A,amplitudes_A")?;
    for (row, f) in r.layout.frequencies.iter().enumerate() {
        write!(w, "{f},{}", r.decoded.thresholds[row])?;
        for a in &r.decoded.amplitudes[row] {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let s = dir.join("message_summary.txt");
    write_text(&s, &message_summary(r))?;
    out.extend([sent, decoded, amps, s]);
    Ok(out)
}

pub fn simulate_summary(r: &SimulateResult) -> String {
    let c = &r.classification;
    format!(
        "frequency_Hz: {}\nclocks_per_cycle: {}\ncategory: {}\ndc_metric: {}\nlf_ratio: {}\n\
         voltage_distortion: {}\ncurrent_distortion: {}\nnonzero_cycles: {}\nclamps: {}\n{}",
        r.f_o,
        r.k,
        c.category.label(),
        c.dc_metric,
        c.lf_metric,
        r.voltage_distortion.total_distortion,
        r.current_distortion.total_distortion,
        r.nonzero_cycles,
        r.clamps,
        converter_lines(&r.stats)
    )
}

pub fn write_simulate(dir: &Path, r: &SimulateResult) -> Result<Vec<PathBuf>> {
    let ts = dir.join("simulate_timeseries.csv");
    write_time_series(&ts, &r.rows)?;
    let s = dir.join("simulate_summary.txt");
    write_text(&s, &simulate_summary(r))?;
    Ok(vec![ts, s])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix() -> SpectrogramMatrix {
        SpectrogramMatrix {
            times: vec![0.5, 1.5, 2.5],
            frequencies: vec![0.0, 1.0],
            magnitudes: vec![vec![0.0, -100.0], vec![-40.0, -80.0], vec![-20.0, -60.0]],
            window_len: 2,
            hop: 1,
            sample_rate: 2.0,
        }
    }

    #[test]
    fn pgm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        write_spectrogram_pgm(&p, &matrix()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // top line is the highest bin
        assert_eq!(&bytes[header.len()..], &[0, 0, 64, 255, 128, 191]);
    }

    #[test]
    fn spectrogram_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_spectrogram_csv(&p, &matrix()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "time_s,0,1\n0.5,0,-100\n1.5,-40,-80\n2.5,-20,-60\n");
    }

    #[test]
    fn time_series_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let row = TimeRow {
            time: 0.0,
            level: -3,
            v_out: -60.0,
            i_load: 0.25,
            module_voltages: vec![20.0, 19.5],
        };
        write_time_series(&p, &[row]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "time_s,level,v_out_V,i_load_A,v_module_1_V,v_module_2_V\n0,-3,-60,0.25,20,19.5\n"
        );
    }
}
