//! Networks of forgetful organic electrochemical synapses.
//!
//! Devices are paired into differential synapses arranged in crossbars,
//! trained on-device with the Manhattan Rule, and left to self-discharge in
//! open circuit. Model-derived reminder pulses restore drifted weights.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod data;
pub mod device;
pub mod discharge;
pub mod error;
pub mod experiments;
pub mod network;
pub mod reminder;
pub mod trace;
pub mod training;

pub use crossbar::{CrossbarLayer, DifferentialSynapse, ReadErrorModel};
pub use data::{Dataset, Readout};
pub use device::{DeviceParams, DeviceState};
pub use error::{Result, SimError};
pub use network::Network;
pub use reminder::{ReminderMap, ReminderPolicy};
pub use trace::ExperimentTrace;
pub use training::TrainConfig;
