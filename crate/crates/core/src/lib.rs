//! Deterministic multi-rate simulator of a quasi-direct-drive knee
//! exoskeleton and its biomechanics-model-based assistive controller.
//!
//! The crate is organized along the signal path:
//!
//! - [`anthropometry`]: reference segment table and subject-scaled models.
//! - [`biomechanics`]: joint angles, the quasi-static knee torque estimate,
//!   and the assistive reference.
//! - [`motion`]: prescribed squat/stoop trajectories, posture replay, and
//!   the 400 Hz IMU pipeline with startup calibration.
//! - [`plant`]: motor, 36:1 gear, Bowden cable with dead-band and capstan
//!   friction, hyperextension stop and load cell.
//! - [`control`]: the cascaded torque (1 kHz) / velocity (20 kHz) / current
//!   (200 kHz) PID controller with power-off, zero-torque and assist modes.
//! - [`engine`]: the fixed-step scheduler, trace logging and metrics.
//! - [`config`]: run configuration and the key=value file format.

pub mod anthropometry;
pub mod biomechanics;
pub mod config;
pub mod control;
pub mod engine;
pub mod error;
pub mod motion;
pub mod plant;

pub use anthropometry::{build_human_model, reference_segments, HumanModel, SegmentTable};
pub use biomechanics::{
    assistive_reference, biological_knee_torque, joint_angles, JointAngles, Posture,
    TorqueReference,
};
pub use config::{ModeKind, SimConfig};
pub use control::{ControlMode, ControlState, LoopGains, PidGains};
pub use engine::{metrics_from_log, run, Metrics, RunOutput, TraceLog};
pub use error::SimError;
pub use motion::{imu_stream, true_posture, ImuConfig, MotionSource, TrajectoryParams};
pub use plant::{
    cable_transmit, gearbox, CableParams, MotorParams, Plant, PlantParams, PlantState,
};
