//! `nlmsim`: runs the sweep, chirp, mix, message and single-tone experiments
//! and writes their CSV, PGM and text outputs.

use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nlmsim::fixedpoint::QFormat;
use nlmsim::scenarios::config::{Spacing, SweepSignal};
use nlmsim::scenarios::sweep::SweepMethod;
use nlmsim::scenarios::{chirp, message, mix, output, simulate, sweep, Config};

#[derive(Debug, Parser)]
#[command(
    name = "nlmsim",
    version,
    about = "LUT synthesis, nearest-level modulation and converter experiments"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Seed for random bitmaps; every run is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Controller clock (Hz).
    #[arg(long, global = true, value_name = "HZ")]
    fclock: Option<f64>,
    /// Largest output level magnitude.
    #[arg(long, global = true)]
    levels: Option<i32>,
    /// Reference-sample format, e.g. Q18.14.
    #[arg(long, global = true, value_name = "FORMAT")]
    qformat: Option<QFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classification maps over frequency and modulation factor.
    Sweep {
        /// Methods to run (default: all four).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<SweepMethod>>,
        /// Fine grid: m step 0.01, 1 kHz..5 MHz in 1 kHz steps.
        #[arg(long)]
        full_grid: bool,
        /// Linear frequency axis with this step (Hz) instead of log spacing.
        #[arg(long, value_name = "HZ")]
        linear_step: Option<f64>,
        /// Classify the full converter model's current instead of the ideal RL current.
        #[arg(long)]
        with_converter: bool,
    },
    /// Exponential chirp through the converter.
    Chirp {
        /// Sweep duration (s).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Gated channel mixture.
    Mix,
    /// Bitmap written into the current spectrogram and decoded.
    Message {
        /// `arecibo`, `random` or a text file of 0/1 rows.
        #[arg(long)]
        bitmap: Option<String>,
    },
    /// Single tone through the converter.
    Simulate {
        /// Output frequency (Hz).
        #[arg(long)]
        frequency: Option<f64>,
        /// Modulation factor in [0, 1].
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        method: Option<SweepMethod>,
        /// Output cycles after the load has settled.
        #[arg(long)]
        cycles: Option<usize>,
    },
}

fn load_config(g: &Global) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(f) = g.fclock {
        cfg.controller.f_clock = f;
    }
    if let Some(l) = g.levels {
        cfg.controller.levels = l;
    }
    if let Some(q) = g.qformat {
        cfg.controller.qformat = q;
    }
    if let Some(s) = g.seed {
        cfg.message.seed = s;
    }
    Ok(cfg)
}

fn apply_command(cfg: &mut Config, cmd: &Command) {
    match cmd {
        Command::Sweep {
            methods,
            full_grid,
            linear_step,
            with_converter,
        } => {
            if let Some(m) = methods {
                cfg.sweep.methods = m.clone();
            }
            cfg.sweep.full_grid |= *full_grid;
            if let Some(step) = linear_step {
                cfg.sweep.spacing = Spacing::Linear;
                cfg.sweep.f_step = *step;
            }
            if *with_converter {
                cfg.sweep.signal = SweepSignal::Converter;
            }
        }
        Command::Chirp { duration } => {
            if let Some(d) = duration {
                cfg.chirp.duration = *d;
            }
        }
        Command::Mix => {}
        Command::Message { bitmap } => {
            if let Some(b) = bitmap {
                cfg.message.bitmap = b.clone();
            }
        }
        Command::Simulate {
            frequency,
            m,
            method,
            cycles,
        } => {
            let s = &mut cfg.simulate;
            if let Some(f) = frequency {
                s.frequency = *f;
            }
            if let Some(m) = m {
                s.m = *m;
            }
            if let Some(k) = method {
                s.method = *k;
            }
            if let Some(c) = cycles {
                s.cycles = *c;
            }
        }
    }
}

fn report(files: &[PathBuf], summary: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let written = write!(out, "{summary}")
        .and_then(|()| {
            files
                .iter()
                .try_for_each(|f| writeln!(out, "wrote {}", f.display()))
        })
        .and_then(|()| out.flush());
    match written {
        // a closed pipe (e.g. `| head`) is not a failure
        Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(()),
        r => r.context("writing report"),
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.global.out.as_os_str().is_empty() {
        bail!("--out must not be empty");
    }
    let mut cfg = load_config(&cli.global)?;
    apply_command(&mut cfg, &cli.command);
    cfg.validate().context("invalid configuration")?;
    let out: &Path = &cli.global.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Sweep { .. } => {
            let r = sweep::run_sweep(&cfg)?;
            report(&output::write_sweep(out, &r)?, &output::sweep_summary(&r))?;
        }
        Command::Chirp { .. } => {
            let r = chirp::run_chirp(&cfg)?;
            report(&output::write_chirp(out, &r)?, &output::chirp_summary(&r))?;
        }
        Command::Mix => {
            let r = mix::run_mix(&cfg)?;
            report(&output::write_mix(out, &r)?, &output::mix_summary(&r))?;
        }
        Command::Message { .. } => {
            let r = message::run_message(&cfg)?;
            report(
                &output::write_message(out, &r)?,
                &output::message_summary(&r),
            )?;
        }
        Command::Simulate { .. } => {
            let r = simulate::run_simulate(&cfg)?;
            report(
                &output::write_simulate(out, &r)?,
                &output::simulate_summary(&r),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
