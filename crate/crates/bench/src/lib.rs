//! Shared setup for the simulator benchmarks.

use exosim_core::config::{ModeKind, SimConfig};

/// A one-second zero-torque run: 200k base steps through the full chain.
pub fn one_second_config() -> SimConfig {
    SimConfig {
        mode: ModeKind::ZeroTorque,
        duration_s: Some(1.0),
        settle_skip_s: Some(0.0),
        log_decimation: 200,
        ..SimConfig::default()
    }
}
