//! DC fault-current and fuse-wire energy models for high-voltage 12-pulse
//! rectifier supplies protected by a crowbar.

pub mod calibration;
pub mod cli;
pub mod error;
pub mod fault_model;
pub mod fusewire;
pub mod rectifier_sim;
pub mod system;

pub use error::{Error, Result};
