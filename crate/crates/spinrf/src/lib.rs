//! Simulator and training library for multilayer spintronic RF neural
//! networks: resonator synapse chains, spin-torque oscillator neurons,
//! end-to-end analytic gradients, device curve fitting and energy
//! budgeting, plus a CLI for reproducible runs.
//!
//! Unit conventions, used consistently across the crate:
//! - frequencies in Hz, powers in uW, voltages in uV at module boundaries;
//! - stored chain biases in volts (see [`chain::UV_PER_V`]);
//! - currents in A, resistances in ohm, energies in J.

// `!(x > 0.0)` is the NaN-rejecting validation idiom used throughout;
// index loops over small dense matrices read better than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod chain;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod device;
pub mod energy;
pub mod error;
pub mod fit;
pub mod network;
pub mod neuron;
pub mod software;
pub mod trainer;

pub use error::{Error, Result};
