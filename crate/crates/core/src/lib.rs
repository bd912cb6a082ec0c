//! Microscopic ring-road simulation of mixed human-driven and connected
//! automated traffic.
//!
//! The crate is organised bottom-up:
//!
//! - [`fleet`]: vehicle-class sequences (HV / LV1 / LV2 / PV) and their
//!   closed-form Markov-chain probabilities.
//! - [`controllers`]: acceleration laws for every spacing strategy plus the
//!   human-driver model.
//! - [`platoon`]: platoon partitioning and per-vehicle strategy assignment
//!   for the ten LV/PV combinations.
//! - [`stability`]: frequency-domain string-stability checks.
//! - [`sim`]: the fixed-step ring engine.
//! - [`energy`]: VSP fuel model and instantaneous emission model.
//! - [`experiment`]: sweeps, verification reports and CSV output.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod controllers;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod fleet;
pub mod par;
pub mod platoon;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
