//! Run configuration: defaults, the plain-text key=value format, and the
//! canonical echo used for log headers and bit-exact round trips.
//!
//! Angle-valued keys accept a `_deg` or `_rad` suffix at the file boundary;
//! the echo always emits `_rad` with full precision so that parsing an
//! echoed config reproduces the run exactly.

use std::path::{Path, PathBuf};

use crate::control::{ControlMode, LoopGains, BASE_STEP_S};
use crate::error::SimError;
use crate::motion::{ImuConfig, MotionSource, ReplayTrajectory, TrajectoryKind, TrajectoryParams};
use crate::plant::PlantParams;

/// Operating mode selector, combined with [`SimConfig::alpha`] to form the
/// controller mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    PowerOff,
    ZeroTorque,
    Assist,
}

impl ModeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeKind::PowerOff => "power_off",
            ModeKind::ZeroTorque => "zero_torque",
            ModeKind::Assist => "assist",
        }
    }

    pub fn parse(s: &str) -> Option<ModeKind> {
        match s {
            "power_off" => Some(ModeKind::PowerOff),
            "zero_torque" => Some(ModeKind::ZeroTorque),
            "assist" => Some(ModeKind::Assist),
            _ => None,
        }
    }
}

/// Everything a run needs. `Default` is the calibrated baseline: reference
/// subject, five 8-second squat cycles, assist gain 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: String,
    pub subject_mass_kg: f64,
    pub subject_height_m: f64,
    pub trajectory: TrajectoryParams,
    pub imu: ImuConfig,
    pub plant: PlantParams,
    pub mode: ModeKind,
    pub alpha: f64,
    pub gains: LoopGains,
    /// Simulated time; defaults to cycles times the cycle period.
    pub duration_s: Option<f64>,
    /// Fixed base step; the loop rates divide it exactly.
    pub base_step_s: f64,
    /// Every Nth base step lands in the trace file.
    pub log_decimation: u32,
    pub seed: u64,
    /// Metrics skip this much leading time; defaults to one full cycle.
    pub settle_skip_s: Option<f64>,
    pub anthropometry_override: Option<PathBuf>,
    pub replay_file: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let plant = PlantParams::default();
        SimConfig {
            scenario: "custom".to_string(),
            subject_mass_kg: 81.4,
            subject_height_m: 1.784,
            trajectory: TrajectoryParams::squat(),
            imu: ImuConfig::default(),
            gains: LoopGains::tuned_defaults(&plant),
            plant,
            mode: ModeKind::Assist,
            alpha: 0.5,
            duration_s: None,
            base_step_s: BASE_STEP_S,
            log_decimation: 20,
            seed: 0,
            settle_skip_s: None,
            anthropometry_override: None,
            replay_file: None,
        }
    }
}

impl SimConfig {
    pub fn effective_duration_s(&self) -> f64 {
        self.duration_s
            .unwrap_or_else(|| self.trajectory.duration_s())
    }

    /// Cycle length used for per-cycle metrics; a replayed file counts as a
    /// single cycle.
    pub fn metrics_cycle_s(&self) -> f64 {
        self.trajectory.cycle_period_s
    }

    pub fn effective_settle_skip_s(&self) -> f64 {
        self.settle_skip_s.unwrap_or(self.trajectory.cycle_period_s)
    }

    pub fn control_mode(&self) -> ControlMode {
        match self.mode {
            ModeKind::PowerOff => ControlMode::PowerOff,
            ModeKind::ZeroTorque => ControlMode::ZeroTorque,
            ModeKind::Assist => ControlMode::Assist { alpha: self.alpha },
        }
    }

    pub fn motion_source(&self) -> Result<MotionSource, SimError> {
        match &self.replay_file {
            Some(path) => Ok(MotionSource::Replay(ReplayTrajectory::load(path)?)),
            None => Ok(MotionSource::Prescribed(self.trajectory)),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.subject_mass_kg.is_finite() && self.subject_mass_kg > 0.0) {
            return Err(SimError::InvalidSubject(format!(
                "subject mass must be positive, got {}",
                self.subject_mass_kg
            )));
        }
        if !(self.subject_height_m.is_finite() && self.subject_height_m > 0.0) {
            return Err(SimError::InvalidSubject(format!(
                "subject height must be positive, got {}",
                self.subject_height_m
            )));
        }
        self.trajectory.validate()?;
        self.imu.validate()?;
        self.plant.validate()?;
        self.gains.validate()?;
        if !self.alpha.is_finite() || self.alpha.abs() > crate::biomechanics::DEFAULT_GAIN_LIMIT {
            return Err(SimError::GainOutOfRange {
                gain: self.alpha,
                limit: crate::biomechanics::DEFAULT_GAIN_LIMIT,
            });
        }
        if self.base_step_s != BASE_STEP_S {
            return Err(SimError::Config(format!(
                "the base step is fixed at {BASE_STEP_S} s (got {}); the loop \
                 rates are defined against it",
                self.base_step_s
            )));
        }
        if self.log_decimation == 0 {
            return Err(SimError::Config("log decimation must be at least 1".into()));
        }
        if let Some(d) = self.duration_s {
            if !(d.is_finite() && d > 0.0) {
                return Err(SimError::Config(format!(
                    "duration must be positive, got {d}"
                )));
            }
        }
        if let Some(s) = self.settle_skip_s {
            if !(s.is_finite() && s >= 0.0) {
                return Err(SimError::Config(format!(
                    "settle skip must be non-negative, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn parse_file(path: &Path) -> Result<SimConfig, SimError> {
        let mut cfg = SimConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str, label: &str) -> Result<SimConfig, SimError> {
        let mut cfg = SimConfig::default();
        cfg.apply_str(text, label)?;
        Ok(cfg)
    }

    /// Layers a config file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        self.apply_str(&text, &path.display().to_string())
    }

    pub fn apply_str(&mut self, text: &str, label: &str) -> Result<(), SimError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped
                .split_once('=')
                .ok_or_else(|| SimError::ConfigParse {
                    file: label.to_string(),
                    line,
                    msg: format!("expected `key = value`, got `{raw}`"),
                })?;
            self.apply_kv(key.trim(), value.trim(), label, line)?;
        }
        Ok(())
    }

    /// Applies one key=value pair; every key the echo can emit plus the
    /// `_deg` aliases for angle-valued keys. Unknown keys are rejected.
    pub fn apply_kv(
        &mut self,
        key: &str,
        value: &str,
        file: &str,
        line: usize,
    ) -> Result<(), SimError> {
        let parse_err = |msg: String| SimError::ConfigParse {
            file: file.to_string(),
            line,
            msg,
        };
        let num = |value: &str| -> Result<f64, SimError> {
            value
                .parse::<f64>()
                .map_err(|_| parse_err(format!("`{value}` is not a number")))
        };
        let int = |value: &str| -> Result<u64, SimError> {
            value
                .parse::<u64>()
                .map_err(|_| parse_err(format!("`{value}` is not a non-negative integer")))
        };
        // Angle keys: `<base>_rad` taken verbatim, `<base>_deg` converted.
        let angle = |base: &str, key: &str, value: &str| -> Result<Option<f64>, SimError> {
            if key == format!("{base}_rad") {
                return Ok(Some(num(value)?));
            }
            if key == format!("{base}_deg") {
                return Ok(Some(num(value)?.to_radians()));
            }
            Ok(None)
        };

        match key {
            "sim.scenario" => {
                self.scenario = value.to_string();
                return Ok(());
            }
            "subject.mass_kg" => {
                self.subject_mass_kg = num(value)?;
                return Ok(());
            }
            "subject.height_m" => {
                self.subject_height_m = num(value)?;
                return Ok(());
            }
            "trajectory.kind" => {
                let kind = TrajectoryKind::parse(value)
                    .ok_or_else(|| parse_err(format!("`{value}` is not `squat` or `stoop`")))?;
                // Switching kinds pulls in that kind's angle defaults; any
                // explicit angle keys later in the file still override.
                let cycles = self.trajectory.cycles;
                let period = self.trajectory.cycle_period_s;
                self.trajectory = TrajectoryParams::defaults_for(kind);
                self.trajectory.cycles = cycles;
                self.trajectory.cycle_period_s = period;
                return Ok(());
            }
            "trajectory.cycle_period_s" => {
                self.trajectory.cycle_period_s = num(value)?;
                return Ok(());
            }
            "trajectory.cycles" => {
                self.trajectory.cycles = int(value)? as u32;
                return Ok(());
            }
            "trajectory.shank_share" => {
                self.trajectory.shank_share = num(value)?;
                return Ok(());
            }
            "imu.sample_rate_hz" => {
                self.imu.sample_rate_hz = num(value)?;
                return Ok(());
            }
            "imu.calibration_window_s" => {
                self.imu.calibration_window_s = num(value)?;
                return Ok(());
            }
            "plant.motor.torque_constant_nm_a" => {
                self.plant.motor.torque_constant_nm_a = num(value)?;
                return Ok(());
            }
            "plant.motor.back_emf_v_s_rad" => {
                self.plant.motor.back_emf_v_s_rad = num(value)?;
                return Ok(());
            }
            "plant.motor.resistance_ohm" => {
                self.plant.motor.resistance_ohm = num(value)?;
                return Ok(());
            }
            "plant.motor.inductance_h" => {
                self.plant.motor.inductance_h = num(value)?;
                return Ok(());
            }
            "plant.motor.rotor_inertia_kg_m2" => {
                self.plant.motor.rotor_inertia_kg_m2 = num(value)?;
                return Ok(());
            }
            "plant.motor.viscous_damping_nm_s_rad" => {
                self.plant.motor.viscous_damping_nm_s_rad = num(value)?;
                return Ok(());
            }
            "plant.motor.continuous_torque_nm" => {
                self.plant.motor.continuous_torque_nm = num(value)?;
                return Ok(());
            }
            "plant.motor.voltage_limit_v" => {
                self.plant.motor.voltage_limit_v = num(value)?;
                return Ok(());
            }
            "plant.cable.stiffness_nm_rad" => {
                self.plant.cable.stiffness_nm_rad = num(value)?;
                return Ok(());
            }
            "plant.cable.friction_mu" => {
                self.plant.cable.friction_mu = num(value)?;
                return Ok(());
            }
            "plant.cable.viscous_nm_s_rad" => {
                self.plant.cable.viscous_nm_s_rad = num(value)?;
                return Ok(());
            }
            "plant.gear.ratio" => {
                self.plant.gear.ratio = num(value)?;
                return Ok(());
            }
            "plant.gear.efficiency" => {
                self.plant.gear.efficiency = num(value)?;
                return Ok(());
            }
            "plant.load_cell.limit_nm" => {
                self.plant.load_cell_limit_nm = num(value)?;
                return Ok(());
            }
            "control.mode" => {
                self.mode = ModeKind::parse(value).ok_or_else(|| {
                    parse_err(format!(
                        "`{value}` is not one of power_off, zero_torque, assist"
                    ))
                })?;
                return Ok(());
            }
            "control.alpha" => {
                let alpha = num(value)?;
                if !alpha.is_finite() || alpha.abs() > crate::biomechanics::DEFAULT_GAIN_LIMIT {
                    return Err(SimError::GainOutOfRange {
                        gain: alpha,
                        limit: crate::biomechanics::DEFAULT_GAIN_LIMIT,
                    });
                }
                self.alpha = alpha;
                return Ok(());
            }
            "sim.duration_s" => {
                self.duration_s = Some(num(value)?);
                return Ok(());
            }
            "sim.base_step_s" => {
                self.base_step_s = num(value)?;
                return Ok(());
            }
            "sim.log_decimation" => {
                self.log_decimation = int(value)? as u32;
                return Ok(());
            }
            "sim.seed" => {
                self.imu.seed = int(value)?;
                self.seed = self.imu.seed;
                return Ok(());
            }
            "sim.settle_skip_s" => {
                self.settle_skip_s = Some(num(value)?);
                return Ok(());
            }
            "anthropometry.override_file" => {
                self.anthropometry_override = Some(PathBuf::from(value));
                return Ok(());
            }
            "motion.replay_file" => {
                self.replay_file = Some(PathBuf::from(value));
                return Ok(());
            }
            _ => {}
        }

        if let Some(v) = angle("trajectory.peak_knee_flexion", key, value)? {
            self.trajectory.peak_knee_flexion_rad = v;
            return Ok(());
        }
        if let Some(v) = angle("trajectory.peak_trunk_lean", key, value)? {
            self.trajectory.peak_trunk_lean_rad = v;
            return Ok(());
        }
        if let Some(v) = angle("imu.noise_std", key, value)? {
            self.imu.noise_std_rad = v;
            return Ok(());
        }
        if let Some(v) = angle("imu.mount_bias_trunk", key, value)? {
            self.imu.mount_bias_rad[0] = v;
            return Ok(());
        }
        if let Some(v) = angle("imu.mount_bias_thigh", key, value)? {
            self.imu.mount_bias_rad[1] = v;
            return Ok(());
        }
        if let Some(v) = angle("imu.mount_bias_shank", key, value)? {
            self.imu.mount_bias_rad[2] = v;
            return Ok(());
        }
        if let Some(v) = angle("plant.cable.backlash", key, value)? {
            self.plant.cable.backlash_rad = v;
            return Ok(());
        }
        if let Some(v) = angle("plant.cable.wrap_angle", key, value)? {
            self.plant.cable.wrap_angle_rad = v;
            return Ok(());
        }
        if let Some(v) = angle("plant.cable.pretension", key, value)? {
            self.plant.cable.pretension_rad = v;
            return Ok(());
        }

        for (loop_name, gains) in [
            ("torque", &mut self.gains.torque),
            ("velocity", &mut self.gains.velocity),
            ("current", &mut self.gains.current),
        ] {
            if let Some(field) = key.strip_prefix(&format!("control.{loop_name}.")) {
                let v = num(value)?;
                match field {
                    "kp" => gains.kp = v,
                    "ki" => gains.ki = v,
                    "kd" => gains.kd = v,
                    "limit" => gains.output_limit = v,
                    "integrator_limit" => gains.integrator_limit = v,
                    "derivative_filter_tau_s" => gains.derivative_filter_tau_s = v,
                    _ => {
                        return Err(SimError::UnknownKey {
                            file: file.to_string(),
                            line,
                            key: key.to_string(),
                        })
                    }
                }
                return Ok(());
            }
        }

        Err(SimError::UnknownKey {
            file: file.to_string(),
            line,
            key: key.to_string(),
        })
    }

    /// Canonical key=value pairs; parsing them back reproduces this config
    /// bit for bit.
    pub fn echo(&self) -> Vec<(String, String)> {
        fn f(v: f64) -> String {
            format!("{v}")
        }
        let mut out: Vec<(String, String)> = vec![
            ("sim.scenario".into(), self.scenario.clone()),
            ("subject.mass_kg".into(), f(self.subject_mass_kg)),
            ("subject.height_m".into(), f(self.subject_height_m)),
            (
                "trajectory.kind".into(),
                self.trajectory.kind.as_str().into(),
            ),
            (
                "trajectory.cycle_period_s".into(),
                f(self.trajectory.cycle_period_s),
            ),
            (
                "trajectory.cycles".into(),
                self.trajectory.cycles.to_string(),
            ),
            (
                "trajectory.peak_knee_flexion_rad".into(),
                f(self.trajectory.peak_knee_flexion_rad),
            ),
            (
                "trajectory.peak_trunk_lean_rad".into(),
                f(self.trajectory.peak_trunk_lean_rad),
            ),
            (
                "trajectory.shank_share".into(),
                f(self.trajectory.shank_share),
            ),
            ("imu.sample_rate_hz".into(), f(self.imu.sample_rate_hz)),
            ("imu.noise_std_rad".into(), f(self.imu.noise_std_rad)),
            (
                "imu.calibration_window_s".into(),
                f(self.imu.calibration_window_s),
            ),
            (
                "imu.mount_bias_trunk_rad".into(),
                f(self.imu.mount_bias_rad[0]),
            ),
            (
                "imu.mount_bias_thigh_rad".into(),
                f(self.imu.mount_bias_rad[1]),
            ),
            (
                "imu.mount_bias_shank_rad".into(),
                f(self.imu.mount_bias_rad[2]),
            ),
            (
                "plant.motor.torque_constant_nm_a".into(),
                f(self.plant.motor.torque_constant_nm_a),
            ),
            (
                "plant.motor.back_emf_v_s_rad".into(),
                f(self.plant.motor.back_emf_v_s_rad),
            ),
            (
                "plant.motor.resistance_ohm".into(),
                f(self.plant.motor.resistance_ohm),
            ),
            (
                "plant.motor.inductance_h".into(),
                f(self.plant.motor.inductance_h),
            ),
            (
                "plant.motor.rotor_inertia_kg_m2".into(),
                f(self.plant.motor.rotor_inertia_kg_m2),
            ),
            (
                "plant.motor.viscous_damping_nm_s_rad".into(),
                f(self.plant.motor.viscous_damping_nm_s_rad),
            ),
            (
                "plant.motor.continuous_torque_nm".into(),
                f(self.plant.motor.continuous_torque_nm),
            ),
            (
                "plant.motor.voltage_limit_v".into(),
                f(self.plant.motor.voltage_limit_v),
            ),
            (
                "plant.cable.stiffness_nm_rad".into(),
                f(self.plant.cable.stiffness_nm_rad),
            ),
            (
                "plant.cable.backlash_rad".into(),
                f(self.plant.cable.backlash_rad),
            ),
            (
                "plant.cable.friction_mu".into(),
                f(self.plant.cable.friction_mu),
            ),
            (
                "plant.cable.wrap_angle_rad".into(),
                f(self.plant.cable.wrap_angle_rad),
            ),
            (
                "plant.cable.viscous_nm_s_rad".into(),
                f(self.plant.cable.viscous_nm_s_rad),
            ),
            (
                "plant.cable.pretension_rad".into(),
                f(self.plant.cable.pretension_rad),
            ),
            ("plant.gear.ratio".into(), f(self.plant.gear.ratio)),
            (
                "plant.gear.efficiency".into(),
                f(self.plant.gear.efficiency),
            ),
            (
                "plant.load_cell.limit_nm".into(),
                f(self.plant.load_cell_limit_nm),
            ),
            ("control.mode".into(), self.mode.as_str().into()),
            ("control.alpha".into(), f(self.alpha)),
        ];
        for (name, g) in [
            ("torque", &self.gains.torque),
            ("velocity", &self.gains.velocity),
            ("current", &self.gains.current),
        ] {
            out.push((format!("control.{name}.kp"), f(g.kp)));
            out.push((format!("control.{name}.ki"), f(g.ki)));
            out.push((format!("control.{name}.kd"), f(g.kd)));
            out.push((format!("control.{name}.limit"), f(g.output_limit)));
            out.push((
                format!("control.{name}.integrator_limit"),
                f(g.integrator_limit),
            ));
            out.push((
                format!("control.{name}.derivative_filter_tau_s"),
                f(g.derivative_filter_tau_s),
            ));
        }
        if let Some(d) = self.duration_s {
            out.push(("sim.duration_s".into(), f(d)));
        }
        out.push(("sim.base_step_s".into(), f(self.base_step_s)));
        out.push(("sim.log_decimation".into(), self.log_decimation.to_string()));
        out.push(("sim.seed".into(), self.imu.seed.to_string()));
        if let Some(s) = self.settle_skip_s {
            out.push(("sim.settle_skip_s".into(), f(s)));
        }
        if let Some(p) = &self.anthropometry_override {
            out.push((
                "anthropometry.override_file".into(),
                p.display().to_string(),
            ));
        }
        if let Some(p) = &self.replay_file {
            out.push(("motion.replay_file".into(), p.display().to_string()));
        }
        out
    }

    pub fn echo_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.echo() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
