//! Behavioral model of a cascaded double-H-bridge arm driving an RL load.
//!
//! Each module holds one capacitor and connects to its neighbours in one of
//! six ways. Series modules add their capacitor voltage to the output;
//! bypassed and paralleled modules contribute nothing. An ideal DC source
//! sits across one module and keeps it at nominal voltage within a current
//! limit; the others are recharged by periodically paralleling every idle
//! module, which equalizes their voltages while conserving charge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulation::LevelCommand;

/// Inter-module connection of one module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connection {
    BypassPos,
    BypassNeg,
    SeriesPos,
    SeriesNeg,
    ParallelPos,
    ParallelNeg,
}

impl Connection {
    /// Output contribution as a multiple of the capacitor voltage.
    pub fn polarity(self) -> f64 {
        match self {
            Connection::SeriesPos => 1.0,
            Connection::SeriesNeg => -1.0,
            _ => 0.0,
        }
    }

    pub fn is_series(self) -> bool {
        matches!(self, Connection::SeriesPos | Connection::SeriesNeg)
    }

    pub fn is_parallel(self) -> bool {
        matches!(self, Connection::ParallelPos | Connection::ParallelNeg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleState {
    pub cap_voltage: f64,
    pub capacitance: f64,
    pub connection: Connection,
}

impl ModuleState {
    fn charge(&self) -> f64 {
        self.capacitance * self.cap_voltage
    }

    fn energy(&self) -> f64 {
        0.5 * self.capacitance * self.cap_voltage * self.cap_voltage
    }
}

/// Arm layout, source and balancing schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterConfig {
    pub n_modules: usize,
    /// Volts per module.
    pub nominal_voltage: f64,
    /// Farads per module.
    pub capacitance: f64,
    /// 1-based index of the module carrying the DC source.
    pub source_module: usize,
    /// Amperes the source can deliver into its module.
    pub source_current_limit: f64,
    /// Clocks between paralleling events.
    pub balance_interval: u64,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            n_modules: 7,
            nominal_voltage: 20.0,
            capacitance: 4.7e-3,
            source_module: 4,
            source_current_limit: 400.0,
            balance_interval: 20,
        }
    }
}

impl ConverterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_modules == 0 {
            return bad("converter needs at least one module".into());
        }
        if !(1..=self.n_modules).contains(&self.source_module) {
            return bad(format!(
                "source module {} outside 1..={}",
                self.source_module, self.n_modules
            ));
        }
        if !(self.nominal_voltage > 0.0) || !(self.capacitance > 0.0) {
            return bad("module voltage and capacitance must be positive".into());
        }
        if !(self.source_current_limit >= 0.0) {
            return bad("source current limit must be nonnegative".into());
        }
        if self.balance_interval == 0 {
            return bad("balance interval must be at least one clock".into());
        }
        Ok(())
    }
}

/// Series RL load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadModel {
    /// Ohms.
    pub resistance: f64,
    /// Henries.
    pub inductance: f64,
}

impl Default for LoadModel {
    fn default() -> Self {
        Self {
            resistance: 2.8,
            inductance: 1.5e-6,
        }
    }
}

impl LoadModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.resistance > 0.0) || !(self.inductance >= 0.0) {
            return Err(Error::InvalidParameter(
                "load needs R > 0 and L >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Backward-Euler update of `L·di/dt = v − R·i` over `dt`.
    #[inline]
    pub fn step(&self, current: f64, voltage: f64, dt: f64) -> f64 {
        if self.inductance == 0.0 {
            return voltage / self.resistance;
        }
        (current + dt / self.inductance * voltage) / (1.0 + dt * self.resistance / self.inductance)
    }

    /// `L/R` in seconds.
    pub fn time_constant(&self) -> f64 {
        self.inductance / self.resistance
    }

    /// Impedance magnitude at `f` Hz.
    pub fn impedance(&self, f: f64) -> f64 {
        self.resistance
            .hypot(std::f64::consts::TAU * f * self.inductance)
    }

    /// Steady-state current of a periodic level sequence repeated forever.
    ///
    /// `levels` are applied for one clock each at `volts_per_level`; the result
    /// is the current after each clock of the period, consistent with
    /// [`LoadModel::step`].
    pub fn periodic_current(
        &self,
        levels: &[LevelCommand],
        volts_per_level: f64,
        dt: f64,
    ) -> Vec<f64> {
        if self.inductance == 0.0 {
            return levels
                .iter()
                .map(|&l| l as f64 * volts_per_level / self.resistance)
                .collect();
        }
        let a = 1.0 / (1.0 + dt * self.resistance / self.inductance);
        let b = a * dt / self.inductance;
        // i after a full period starting from 0, then solve i0 = a^K i0 + that
        let mut i = 0.0;
        for &l in levels {
            i = a * i + b * l as f64 * volts_per_level;
        }
        let ak = a.powi(levels.len() as i32);
        let mut i = if ak < 1.0 { i / (1.0 - ak) } else { 0.0 };
        levels
            .iter()
            .map(|&l| {
                i = a * i + b * l as f64 * volts_per_level;
                i
            })
            .collect()
    }
}

/// Snapshot of the arm and load.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub modules: Vec<ModuleState>,
    pub load_current: f64,
    pub output_voltage: f64,
}

/// Charge-conserving equalization of a paralleled group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceOutcome {
    pub common_voltage: f64,
    /// Stored energy lost in the equalization, never negative.
    pub energy_loss: f64,
    /// |Σ C·V after − Σ C·V before| / Σ C·V before.
    pub relative_charge_error: f64,
}

/// Equalizes the given modules to `ΣC·V / ΣC`.
pub fn apply_parallel_balancing(modules: &mut [ModuleState]) -> BalanceOutcome {
    let c_total: f64 = modules.iter().map(|m| m.capacitance).sum();
    let q_before: f64 = modules.iter().map(ModuleState::charge).sum();
    if modules.len() < 2 || c_total <= 0.0 {
        let v = if c_total > 0.0 {
            q_before / c_total
        } else {
            0.0
        };
        return BalanceOutcome {
            common_voltage: v,
            energy_loss: 0.0,
            relative_charge_error: 0.0,
        };
    }
    let v = q_before / c_total;
    let energy_loss = modules
        .iter()
        .map(|m| 0.5 * m.capacitance * (m.cap_voltage - v).powi(2))
        .sum();
    for m in modules.iter_mut() {
        m.cap_voltage = v;
    }
    let q_after: f64 = modules.iter().map(ModuleState::charge).sum();
    let relative_charge_error = if q_before != 0.0 {
        ((q_after - q_before) / q_before).abs()
    } else {
        0.0
    };
    BalanceOutcome {
        common_voltage: v,
        energy_loss,
        relative_charge_error,
    }
}

/// Round-robin connection assignment.
///
/// `|level|` consecutive modules starting at `rotation` go in series with the
/// level's polarity; the rest are paralleled on balancing clocks and bypassed
/// otherwise.
pub fn level_to_states(
    level: LevelCommand,
    n_modules: usize,
    rotation: usize,
    balancing: bool,
) -> Result<Vec<Connection>> {
    let count = level.unsigned_abs() as usize;
    if count > n_modules {
        return Err(Error::LevelOutOfRange {
            level,
            max: n_modules as i32,
        });
    }
    let idle = if balancing {
        Connection::ParallelPos
    } else {
        Connection::BypassPos
    };
    let series = if level > 0 {
        Connection::SeriesPos
    } else {
        Connection::SeriesNeg
    };
    let mut out = vec![idle; n_modules];
    for j in 0..count {
        out[(rotation + j) % n_modules] = series;
    }
    Ok(out)
}

/// Running totals of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConverterStats {
    pub steps: u64,
    /// Number of module connection changes.
    pub transitions: u64,
    pub balancing_events: u64,
    /// Energy lost in paralleling equalizations (J).
    pub paralleling_loss: f64,
    /// Largest relative charge error of a single paralleling event.
    pub max_charge_error: f64,
    /// Smallest single-event paralleling loss; negative would be unphysical.
    pub min_event_loss: f64,
    /// Energy delivered by the DC source (J).
    pub source_energy: f64,
    /// Energy lost charging the source module through the ideal source (J).
    pub source_charging_loss: f64,
    /// Energy dissipated in the load resistor (J).
    pub load_energy: f64,
    /// Second-order terms of the fixed-step integration (J): the implicit
    /// inductor update dissipates `L·Δi²/2` per clock, the explicit capacitor
    /// update returns `Δq²/2C`.
    pub integration_residual: f64,
    /// Largest `max_j |V_j − mean| / mean` seen at any clock.
    pub max_spread: f64,
    /// Largest |output voltage| seen (V).
    pub peak_voltage: f64,
    /// Clocks in which the source hit its current limit.
    pub source_limited_steps: u64,
}

/// Clock-stepped converter simulation.
#[derive(Debug, Clone)]
pub struct Converter {
    cfg: ConverterConfig,
    load: LoadModel,
    dt: f64,
    state: SimState,
    rotation: usize,
    clock: u64,
    stats: ConverterStats,
    initial_energy: f64,
    scratch: Vec<ModuleState>,
}

impl Converter {
    /// Starts with every capacitor at nominal voltage and zero load current.
    pub fn new(cfg: ConverterConfig, load: LoadModel, f_clock: f64) -> Result<Self> {
        cfg.validate()?;
        load.validate()?;
        if !(f_clock > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "clock rate must be positive, got {f_clock}"
            )));
        }
        let modules = vec![
            ModuleState {
                cap_voltage: cfg.nominal_voltage,
                capacitance: cfg.capacitance,
                connection: Connection::BypassPos,
            };
            cfg.n_modules
        ];
        let state = SimState {
            time: 0.0,
            modules,
            load_current: 0.0,
            output_voltage: 0.0,
        };
        let mut c = Self {
            cfg,
            load,
            dt: 1.0 / f_clock,
            state,
            rotation: 0,
            clock: 0,
            stats: ConverterStats {
                min_event_loss: f64::INFINITY,
                ..Default::default()
            },
            initial_energy: 0.0,
            scratch: Vec::with_capacity(cfg.n_modules),
        };
        c.initial_energy = c.stored_energy();
        Ok(c)
    }

    pub fn config(&self) -> &ConverterConfig {
        &self.cfg
    }

    pub fn load(&self) -> &LoadModel {
        &self.load
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn stats(&self) -> &ConverterStats {
        &self.stats
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Capacitor plus inductor energy (J).
    pub fn stored_energy(&self) -> f64 {
        let caps: f64 = self.state.modules.iter().map(ModuleState::energy).sum();
        caps + 0.5 * self.load.inductance * self.state.load_current.powi(2)
    }

    /// Source energy minus every booked sink; zero up to rounding.
    pub fn energy_audit_error(&self) -> f64 {
        let s = &self.stats;
        s.source_energy
            - (self.stored_energy() - self.initial_energy)
            - s.paralleling_loss
            - s.source_charging_loss
            - s.load_energy
            - s.integration_residual
    }

    /// `max_j |V_j − mean| / mean` of the current capacitor voltages.
    pub fn spread(&self) -> f64 {
        let n = self.state.modules.len() as f64;
        let mean = self
            .state
            .modules
            .iter()
            .map(|m| m.cap_voltage)
            .sum::<f64>()
            / n;
        if mean <= 0.0 {
            return f64::INFINITY;
        }
        self.state
            .modules
            .iter()
            .map(|m| (m.cap_voltage - mean).abs() / mean)
            .fold(0.0, f64::max)
    }

    /// Advances one clock with `level` applied.
    pub fn step(&mut self, level: LevelCommand) -> Result<&SimState> {
        let n = self.cfg.n_modules;
        let balancing = self.clock.is_multiple_of(self.cfg.balance_interval);
        if balancing && self.clock > 0 {
            self.rotation = (self.rotation + 1) % n;
        }
        let conns = level_to_states(level, n, self.rotation, balancing)?;

        for (m, &c) in self.state.modules.iter_mut().zip(&conns) {
            if m.connection != c {
                self.stats.transitions += 1;
                m.connection = c;
            }
        }

        if balancing {
            self.scratch.clear();
            self.scratch.extend(
                self.state
                    .modules
                    .iter()
                    .copied()
                    .filter(|m| m.connection.is_parallel()),
            );
            if self.scratch.len() >= 2 {
                let out = apply_parallel_balancing(&mut self.scratch);
                for m in self
                    .state
                    .modules
                    .iter_mut()
                    .filter(|m| m.connection.is_parallel())
                {
                    m.cap_voltage = out.common_voltage;
                }
                self.stats.balancing_events += 1;
                self.stats.paralleling_loss += out.energy_loss;
                self.stats.min_event_loss = self.stats.min_event_loss.min(out.energy_loss);
                self.stats.max_charge_error =
                    self.stats.max_charge_error.max(out.relative_charge_error);
            }
        }

        let v_out: f64 = self
            .state
            .modules
            .iter()
            .map(|m| m.connection.polarity() * m.cap_voltage)
            .sum();
        let i_old = self.state.load_current;
        let i = self.load.step(i_old, v_out, self.dt);
        self.stats.load_energy += self.load.resistance * i * i * self.dt;
        self.stats.integration_residual += 0.5 * self.load.inductance * (i - i_old).powi(2);

        let dq = i * self.dt;
        for m in self.state.modules.iter_mut() {
            let p = m.connection.polarity();
            if p != 0.0 {
                m.cap_voltage -= p * dq / m.capacitance;
                self.stats.integration_residual -= 0.5 * dq * dq / m.capacitance;
            }
        }

        let src = &mut self.state.modules[self.cfg.source_module - 1];
        let v_nom = self.cfg.nominal_voltage;
        let wanted = src.capacitance * (v_nom - src.cap_voltage);
        let limit = self.cfg.source_current_limit * self.dt;
        let q = wanted.clamp(-limit, limit);
        if q != wanted {
            self.stats.source_limited_steps += 1;
        }
        if q != 0.0 {
            let e_before = src.energy();
            src.cap_voltage += q / src.capacitance;
            let e_in = v_nom * q;
            self.stats.source_energy += e_in;
            self.stats.source_charging_loss += e_in - (src.energy() - e_before);
        }

        self.clock += 1;
        self.stats.steps += 1;
        self.stats.peak_voltage = self.stats.peak_voltage.max(v_out.abs());
        self.stats.max_spread = self.stats.max_spread.max(self.spread());
        self.state.load_current = i;
        self.state.output_voltage = v_out;
        self.state.time = self.clock as f64 * self.dt;
        Ok(&self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FCLK: f64 = 100e6;

    fn module(v: f64) -> ModuleState {
        ModuleState {
            cap_voltage: v,
            capacitance: 1e-3,
            connection: Connection::ParallelPos,
        }
    }

    #[test]
    fn level_mapping_examples() {
        let s = level_to_states(0, 7, 0, false).unwrap();
        assert!(s.iter().all(|c| !c.is_series()));
        let s = level_to_states(3, 7, 5, false).unwrap();
        assert_eq!(s.iter().filter(|c| **c == Connection::SeriesPos).count(), 3);
        assert_eq!(s[5], Connection::SeriesPos);
        assert_eq!(s[0], Connection::SeriesPos);
        let s = level_to_states(-2, 7, 0, true).unwrap();
        assert_eq!(s.iter().filter(|c| **c == Connection::SeriesNeg).count(), 2);
        assert_eq!(s.iter().filter(|c| c.is_parallel()).count(), 5);
        assert!(level_to_states(8, 7, 0, false).is_err());
    }

    #[test]
    fn output_voltage_of_levels() {
        for (level, volts) in [(0, 0.0), (3, 60.0), (7, 140.0), (-7, -140.0)] {
            let mut c =
                Converter::new(ConverterConfig::default(), LoadModel::default(), FCLK).unwrap();
            assert_eq!(c.step(level).unwrap().output_voltage, volts);
        }
    }

    #[test]
    fn balancing_examples() {
        let mut g = [module(19.0), module(21.0)];
        let o = apply_parallel_balancing(&mut g);
        assert_eq!(g[0].cap_voltage, 20.0);
        assert_eq!(g[1].cap_voltage, 20.0);
        assert!((o.energy_loss - 1e-3 * 4.0 / 4.0).abs() < 1e-15);
        let o = apply_parallel_balancing(&mut g);
        assert_eq!(o.energy_loss, 0.0);
        let vs = [1.0, 5.0, 2.0, 9.0, 3.0, 7.0, 4.0];
        let mut g: Vec<_> = vs.iter().map(|&v| module(v)).collect();
        apply_parallel_balancing(&mut g);
        let mean = vs.iter().sum::<f64>() / 7.0;
        assert!(g.iter().all(|m| (m.cap_voltage - mean).abs() < 1e-12));
    }

    #[test]
    fn rl_discharge_is_exponential() {
        let load = LoadModel::default();
        let dt = 1.0 / FCLK;
        let mut i = 10.0;
        let steps = 54;
        for _ in 0..steps {
            i = load.step(i, 0.0, dt);
        }
        let expected = 10.0 * (-(steps as f64) * dt / load.time_constant()).exp();
        assert!((i - expected).abs() / expected < 0.01, "{i} vs {expected}");
    }

    #[test]
    fn rl_dc_steady_state() {
        let load = LoadModel::default();
        let mut i = 0.0;
        for _ in 0..10_000 {
            i = load.step(i, 140.0, 1.0 / FCLK);
        }
        assert!((i - 50.0).abs() < 1e-9);
    }

    #[test]
    fn periodic_current_is_a_fixed_point_of_the_recursion() {
        let load = LoadModel::default();
        let levels = [0, 3, 6, 7, 6, 3, 0, -3, -6, -7, -6, -3, 1];
        let dt = 1.0 / FCLK;
        let per = load.periodic_current(&levels, 20.0, dt);
        let mut i = *per.last().unwrap();
        for (k, &l) in levels.iter().enumerate() {
            i = load.step(i, l as f64 * 20.0, dt);
            assert!((i - per[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn sinusoidal_drive_matches_phasor() {
        let load = LoadModel::default();
        let dt = 1.0 / FCLK;
        for f in [1e6, 5e6] {
            let per_cycle = (FCLK / f).round() as usize;
            let mut i = 0.0;
            let (mut c, mut s) = (0.0, 0.0);
            let warm = 200 * per_cycle;
            let rec = 100 * per_cycle;
            for n in 0..warm + rec {
                let ph = std::f64::consts::TAU * n as f64 / per_cycle as f64;
                i = load.step(i, 140.0 * ph.sin(), dt);
                if n >= warm {
                    c += i * ph.cos();
                    s += i * ph.sin();
                }
            }
            let amp = 2.0 * c.hypot(s) / rec as f64;
            let expected = 140.0 / load.impedance(f);
            assert!(
                (amp - expected).abs() / expected < 0.02,
                "{f}: {amp} vs {expected}"
            );
        }
    }

    #[test]
    fn energy_audit_closes() {
        let mut c = Converter::new(ConverterConfig::default(), LoadModel::default(), FCLK).unwrap();
        for n in 0..200_000u64 {
            let ph = std::f64::consts::TAU * n as f64 / 2000.0;
            c.step((7.0 * ph.sin()).round() as i32).unwrap();
        }
        let s = *c.stats();
        assert!(s.source_energy > 0.0);
        assert!(
            c.energy_audit_error().abs() < 1e-9 * s.source_energy,
            "{}",
            c.energy_audit_error()
        );
        assert!(s.min_event_loss >= 0.0);
        assert!(s.max_charge_error < 1e-12);
        assert!(s.max_spread < 0.1, "{}", s.max_spread);
        assert!(s.peak_voltage > 130.0);
    }

    #[test]
    fn config_validation() {
        let bad = ConverterConfig {
            source_module: 8,
            ..Default::default()
        };
        assert!(Converter::new(bad, LoadModel::default(), FCLK).is_err());
        let bad = ConverterConfig {
            balance_interval: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(LoadModel {
            resistance: 0.0,
            inductance: 1e-6
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn paralleling_conserves_charge_and_loses_energy(
            vs in prop::collection::vec(0.0f64..40.0, 2..8),
            cs in prop::collection::vec(1e-4f64..1e-2, 8),
        ) {
            let mut g: Vec<ModuleState> = vs.iter().zip(&cs).map(|(&v, &c)| ModuleState {
                cap_voltage: v, capacitance: c, connection: Connection::ParallelNeg }).collect();
            let q0: f64 = g.iter().map(|m| m.charge()).sum();
            let e0: f64 = g.iter().map(|m| m.energy()).sum();
            let o = apply_parallel_balancing(&mut g);
            let q1: f64 = g.iter().map(|m| m.charge()).sum();
            let e1: f64 = g.iter().map(|m| m.energy()).sum();
            prop_assert!((q1 - q0).abs() <= 1e-12 * q0.abs().max(1e-12));
            prop_assert!(o.energy_loss >= 0.0);
            prop_assert!((e0 - e1 - o.energy_loss).abs() <= 1e-9 * e0.max(1e-12));
        }

        #[test]
        fn output_is_level_times_module_voltage(levels in prop::collection::vec(-7i32..=7, 1..200)) {
            let mut c = Converter::new(ConverterConfig::default(), LoadModel::default(), FCLK).unwrap();
            for &l in &levels {
                let before: Vec<f64> = c.state().modules.iter().map(|m| m.cap_voltage).collect();
                let v = c.step(l).unwrap().output_voltage;
                let mean = before.iter().sum::<f64>() / before.len() as f64;
                prop_assert!((v - l as f64 * mean).abs() <= 0.1 * mean * l.abs() as f64 + 1e-9);
            }
        }
    }
}
