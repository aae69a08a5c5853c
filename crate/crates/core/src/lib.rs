//! Simulation toolkit for a wide-bandwidth cascaded multilevel converter.
//!
//! The pipeline mirrors the embedded controller: a fixed-point sine table is
//! read by one of three LUT addressing methods ([`synth`]), rounded to integer
//! converter levels by nearest-level modulation with optional per-cycle bias
//! elimination ([`modulation`]), and applied to a behavioral model of a
//! seven-module cascaded double-H-bridge with an RL load ([`converter`]).
//! [`analysis`] classifies and measures the results and [`scenarios`] wires
//! the experiments together.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod converter;
pub mod error;
pub mod fixedpoint;
pub mod modulation;
pub mod scenarios;
pub mod synth;

pub use error::{Error, Result};
