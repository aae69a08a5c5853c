//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits nonzero if any check fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlmsim::analysis::{dominant_frequency, total_distortion, Category, WaveformRecord};
use nlmsim::converter::LoadModel;
use nlmsim::fixedpoint::{QFormat, TieRule};
use nlmsim::modulation::{ModulationParams, Modulator, ProductRounding};
use nlmsim::scenarios::chirp::{run_chirp, ChirpResult};
use nlmsim::scenarios::config::Spacing;
use nlmsim::scenarios::message::{run_message_with, Bitmap, MessageResult};
use nlmsim::scenarios::mix::run_mix;
use nlmsim::scenarios::output;
use nlmsim::scenarios::simulate::run_simulate;
use nlmsim::scenarios::sweep::{run_sweep, SweepMethod};
use nlmsim::scenarios::Config;
use nlmsim::synth::{
    build_sine_table, derive_timing, initial_address, predict_lf_oscillation, synthesize_cycle,
    CycleState, IndexMapping, LfPrediction, LutMethod, LutSynth, SynthParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Zero-sum guarantee of the adaptive modulator over the default grid.
fn zero_sum() -> Outcome {
    let start = Instant::now();
    let mut cfg = Config::default();
    cfg.sweep.methods = vec![SweepMethod::Adaptive];
    let r = run_sweep(&cfg).expect("sweep runs");
    let map = r.map(SweepMethod::Adaptive).unwrap();
    let elapsed = start.elapsed();
    let min_cycles = map.cells.iter().map(|c| c.cycles).min().unwrap_or(0);
    let pass = map.cells.len() == 21 * 200
        && min_cycles >= 64
        && map.nonzero_cycles() == 0
        && map.clamps() == 0
        && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "{} cells, {} cycles, {} nonzero, {} clamps, {:.1} s",
            map.cells.len(),
            map.cycles(),
            map.nonzero_cycles(),
            map.clamps(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Structure of the four classification maps.
fn map_structure() -> Outcome {
    let mut cfg = Config::default();
    cfg.sweep.spacing = Spacing::Linear;
    cfg.sweep.f_min = 25e3;
    cfg.sweep.f_step = 25e3;
    cfg.sweep.f_max = 5e6;
    let r = run_sweep(&cfg).expect("sweep runs");
    let frac = |m: SweepMethod, c: Category| r.map(m).unwrap().fraction(c);
    let non_ideal = |m: SweepMethod| 1.0 - frac(m, Category::Ideal);

    let conv = r.map(SweepMethod::Conventional).unwrap();
    let dc: Vec<f64> = conv
        .cells
        .iter()
        .filter(|c| c.classification.category == Category::DcBias)
        .map(|c| c.f_hz)
        .collect();
    // "concentrated at high frequency": most DC-bias cells lie in the upper
    // half of the band
    let upper = dc.iter().filter(|&&f| f > 2.5e6).count() as f64 / dc.len().max(1) as f64;

    let conv_dc = frac(SweepMethod::Conventional, Category::DcBias);
    let inh_lf = frac(SweepMethod::Inherited, Category::LfOscillation);
    let imp = non_ideal(SweepMethod::Improved);
    let ada = non_ideal(SweepMethod::Adaptive);
    let pass = conv_dc > 0.10 && upper > 0.5 && inh_lf > 0.10 && imp < 0.02 && ada == 0.0;
    outcome(
        pass,
        format!(
            "conventional dc-bias {:.1}% ({:.0}% above 2.5 MHz), inherited lf {:.1}%, improved non-ideal {:.2}%, adaptive non-ideal {:.2}%",
            100.0 * conv_dc,
            100.0 * upper,
            100.0 * inh_lf,
            100.0 * imp,
            100.0 * ada
        ),
    )
}

/// Measured oscillation of the error-inherited stream against the predictor.
///
/// Cells are drawn uniformly. Where the drift component is weak, the
/// net-value spectrum is instead topped by the table-index rounding spur: the
/// sub-entry start phase walks by `rem mod 1` entries per cycle, which
/// repeats at `min(frac, 1 − frac)·f_clock/K`. Such cells are reported as
/// misses and must be explained by that spur.
fn lf_prediction() -> Outcome {
    let fmt = QFormat::default();
    let fc = 100e6;
    let table = build_sine_table(1024, fmt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut tested, mut matched, mut spur, mut worst) = (0, 0, 0, 0.0f64);
    while tested < 40 {
        let f = rng.gen_range(20e3..5e6);
        let timing = derive_timing(
            SynthParams {
                f_o: f,
                f_clock: fc,
            },
            1024,
            fmt,
            TieRule::AwayFromZero,
        )
        .unwrap();
        let LfPrediction::Relative(rel) = predict_lf_oscillation(&timing) else {
            continue;
        };
        let predicted = LfPrediction::Relative(rel)
            .oscillation_frequency(&timing, fc)
            .unwrap();
        // at least eight periods of the oscillation in the record
        let cycles = (8.0 * 1024.0 / timing.remainder().abs()).ceil() as usize;
        if cycles > 1 << 16 {
            continue;
        }
        let cycles = cycles.max(256);
        let mut synth =
            LutSynth::new(&table, timing, LutMethod::Inherited, IndexMapping::Round).unwrap();
        let mut buf = Vec::new();
        let mut net = Vec::with_capacity(cycles);
        for _ in 0..cycles {
            buf.clear();
            synth.next_cycle_into(&mut buf);
            net.push(buf.iter().sum::<i64>() as f64);
        }
        let rate = timing.cycle_frequency(fc);
        let measured = dominant_frequency(&net, rate).unwrap_or(0.0);
        let err = (measured - predicted).abs() / predicted;
        tested += 1;
        if err < 0.05 {
            matched += 1;
            worst = worst.max(err);
        } else {
            let frac = timing.remainder().abs().fract();
            let spur_f = frac.min(1.0 - frac) * rate;
            spur += ((measured - spur_f).abs() < 0.05 * spur_f) as usize;
        }
    }
    let missed = tested - matched;
    outcome(
        matched >= 20 && spur == missed,
        format!(
            "{matched}/{tested} cells within 5% (worst {:.2}%), {missed} topped by the index-rounding spur ({spur} explained)",
            100.0 * worst
        ),
    )
}

/// Symmetric addressing of the improved method over random configurations.
fn improved_symmetry() -> Outcome {
    let fmt = QFormat::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut pair_faults, mut ref_defects, mut level_defects, mut cases) = (0, 0, 0, 0);
    let mut tables = BTreeMap::new();
    while cases < 1000 {
        let len = 1usize << rng.gen_range(6..=12);
        let fc = rng.gen_range(1e6..200e6);
        // at least two clocks of ΔA resolution, at most Nyquist
        let f = rng.gen_range((4.0 * fc / len as f64 / 16384.0)..(fc / 2.0));
        let Ok(timing) = derive_timing(
            SynthParams {
                f_o: f,
                f_clock: fc,
            },
            len,
            fmt,
            TieRule::AwayFromZero,
        ) else {
            continue;
        };
        if timing.k() < 2 {
            continue;
        }
        let table = tables
            .entry(len)
            .or_insert_with(|| build_sine_table(len, fmt).unwrap());
        let a0 = initial_address(LutMethod::Improved, &timing, None);
        let cyc = synthesize_cycle(
            &CycleState {
                n: 0,
                a0,
                method: LutMethod::Improved,
            },
            &timing,
            table,
            IndexMapping::Round,
        );
        let step = timing.address_format().step();
        let len_raw = (len as f64 / step) as i128;
        let k = timing.k();
        for i in 0..k {
            let s = cyc.addresses[i].raw() + cyc.addresses[k - 1 - i].raw();
            if s.rem_euclid(len_raw) != 0 {
                pair_faults += 1;
                break;
            }
        }
        ref_defects += (cyc.samples.iter().map(|s| s.raw()).sum::<i128>() != 0) as usize;
        let m = Modulator::new(
            ModulationParams::new(1.0, 7).unwrap(),
            fmt,
            TieRule::AwayFromZero,
            ProductRounding::Truncate,
        )
        .unwrap();
        let levels: i64 = cyc
            .samples
            .iter()
            .map(|s| m.level(s.raw() as i64) as i64)
            .sum();
        level_defects += (levels != 0) as usize;
        cases += 1;
    }
    outcome(
        pair_faults == 0 && ref_defects < 10 && level_defects < 10,
        format!(
            "{cases} cases: {pair_faults} asymmetric, {ref_defects} nonzero reference sums, {level_defects} nonzero level sums"
        ),
    )
}

fn chirp_bound(r: &ChirpResult) -> Outcome {
    let worst = r.max_voltage_distortion();
    outcome(
        worst < 0.184 && r.commanded_peak == 140.0,
        format!(
            "{} windows, max {:.2}%, mean {:.2}%, commanded peak {} V, measured peak {:.2} V",
            r.windows.len(),
            100.0 * worst,
            100.0 * r.mean_voltage_distortion(),
            r.commanded_peak,
            r.measured_peak
        ),
    )
}

fn balancing_bound(r: &ChirpResult) -> Outcome {
    let s = &r.stats;
    outcome(
        s.max_spread <= 0.10
            && s.max_charge_error <= 1e-9
            && s.min_event_loss >= 0.0
            && s.balancing_events > 0,
        format!(
            "max spread {:.2}%, max charge error {:.1e}, min event loss {:.3e} J over {} events",
            100.0 * s.max_spread,
            s.max_charge_error,
            s.min_event_loss,
            s.balancing_events
        ),
    )
}

/// Steady-state RL current under a sampled sine against the phasor solution.
fn rl_oracle() -> Outcome {
    let load = LoadModel::default();
    let fc: f64 = 100e6;
    let dt = 1.0 / fc;
    let v = 100.0;
    let mut worst = 0.0f64;
    for f in [10e3, 100e3, 1e6, 5e6] {
        let period = (fc / f).round() as usize;
        let settle = (20.0 * load.time_constant() / dt) as usize;
        let settle = settle.div_ceil(period) * period;
        let mut i = 0.0;
        let mut rec = Vec::new();
        for n in 0..settle + 10 * period {
            let u = v * (std::f64::consts::TAU * f * n as f64 * dt).sin();
            i = load.step(i, u, dt);
            if n >= settle {
                rec.push(i);
            }
        }
        let amp = total_distortion(&WaveformRecord::new(fc, rec, f))
            .unwrap()
            .fundamental_rms
            * 2f64.sqrt();
        let wl = std::f64::consts::TAU * f * load.inductance;
        let expected = v / (load.resistance.powi(2) + wl * wl).sqrt();
        worst = worst.max((amp - expected).abs() / expected);
    }
    outcome(
        worst < 0.02,
        format!("worst amplitude error {:.3}%", 100.0 * worst),
    )
}

fn message_roundtrip(
    random: &MessageResult,
    arecibo: &MessageResult,
    elapsed: Duration,
) -> Outcome {
    outcome(
        random.accuracy >= 0.99 && arecibo.accuracy >= 0.99 && elapsed < Duration::from_secs(120),
        format!(
            "random {:.2}%, arecibo {:.2}%, {:.1} s",
            100.0 * random.accuracy,
            100.0 * arecibo.accuracy,
            elapsed.as_secs_f64()
        ),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

/// Writes every scenario's outputs twice and compares them byte for byte.
fn determinism(chirp: &ChirpResult, message: &MessageResult, message_bitmap: &Bitmap) -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut cfg = Config::default();
    cfg.sweep.f_count = 12;
    cfg.sweep.m_step = 0.25;
    for (pass, d) in dirs.iter().enumerate() {
        let d = d.path();
        output::write_sweep(d, &run_sweep(&cfg).unwrap()).unwrap();
        output::write_mix(d, &run_mix(&cfg).unwrap()).unwrap();
        output::write_simulate(d, &run_simulate(&cfg).unwrap()).unwrap();
        if pass == 0 {
            output::write_chirp(d, chirp).unwrap();
            output::write_message(d, message).unwrap();
        } else {
            output::write_chirp(d, &run_chirp(&cfg).unwrap()).unwrap();
            output::write_message(d, &run_message_with(&cfg, message_bitmap).unwrap()).unwrap();
        }
    }
    let (a, b) = (read_dir(dirs[0].path()), read_dir(dirs[1].path()));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    outcome(
        a.len() == b.len() && differing.is_empty(),
        format!(
            "{} files, {} differ {:?}",
            a.len(),
            differing.len(),
            differing
        ),
    )
}

fn main() -> ExitCode {
    // libtest flags (e.g. from `cargo test -- --nocapture`) are accepted and ignored
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {n}. {name}: {} ({:.1} s)",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += (!o.pass) as usize;
    };

    let cfg = Config::default();
    let mut chirp = None;
    let mut messages = None;
    let random_bitmap = Bitmap::random(23, 73, cfg.message.seed);

    report(1, "zero-sum guarantee", &mut zero_sum);
    report(2, "classification-map structure", &mut map_structure);
    report(3, "oscillation-frequency prediction", &mut lf_prediction);
    report(4, "improved-LUT symmetry", &mut improved_symmetry);
    report(5, "chirp distortion bound", &mut || {
        let r = run_chirp(&cfg).expect("chirp runs");
        let o = chirp_bound(&r);
        chirp = Some(r);
        o
    });
    report(6, "balancing bound", &mut || {
        balancing_bound(chirp.as_ref().unwrap())
    });
    report(7, "RL phasor oracle", &mut rl_oracle);
    report(8, "message round trip", &mut || {
        let t = Instant::now();
        let random = run_message_with(&cfg, &random_bitmap).expect("message runs");
        let arecibo = run_message_with(&cfg, &Bitmap::arecibo()).expect("message runs");
        let o = message_roundtrip(&random, &arecibo, t.elapsed());
        messages = Some(random);
        o
    });
    report(9, "determinism", &mut || {
        determinism(
            chirp.as_ref().unwrap(),
            messages.as_ref().unwrap(),
            &random_bitmap,
        )
    });

    if failed == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
