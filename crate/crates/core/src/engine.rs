//! Fixed-step multi-rate scheduler: advances plant and controller together,
//! logs every signal at a decimated rate, and computes experiment metrics at
//! the full rate.
//!
//! Rates at the 5 us base step: the current loop runs every step (200 kHz),
//! the velocity loop every 10 steps (20 kHz), the torque loop every 200
//! steps (1 kHz), and an IMU sample arrives every 500 steps (400 Hz). Runs
//! are deterministic: the same config and seed give byte-identical logs.

use std::fmt::Write as _;

use crate::anthropometry::{build_human_model, reference_segments};
use crate::biomechanics::joint_angles;
use crate::config::SimConfig;
use crate::control::{ControlState, ControlTiming};
use crate::error::SimError;
use crate::motion::{imu_stream, RNG_ALGORITHM};
use crate::plant::{DriveCommand, Plant, PlantState};

/// Trace format tag written into every log header.
pub const TRACE_FORMAT: &str = "exosim-trace-1";

/// Column header of the trace body.
pub const TRACE_COLUMNS: &str = "t_s,theta_b_rad,theta_t_rad,theta_s_rad,theta_k_rad,\
tau_bio_nm,tau_ref_nm,tau_act_nm,omega_m_rad_s,omega_ref_rad_s,i_a_amp,i_r_amp,v_volt,mode,flags";

/// Flag bits in the trace `flags` column.
pub mod flags {
    /// The torque reference hit the actuator clamp.
    pub const REFERENCE_CLAMPED: u8 = 1;
    /// The load cell saturated (reading clamped to its range).
    pub const LOAD_CELL_SATURATED: u8 = 2;
    /// The hyperextension stop carried the cable torque.
    pub const HYPEREXTENSION_STOP: u8 = 4;
    /// The controller fell back to zero torque on stale posture data.
    pub const SENSOR_FALLBACK: u8 = 8;
}

/// One decimated log row: the controller's view of the world at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t_s: f64,
    pub trunk_rad: f64,
    pub thigh_rad: f64,
    pub shank_rad: f64,
    pub knee_rad: f64,
    pub biological_nm: f64,
    pub reference_nm: f64,
    pub interface_nm: f64,
    pub motor_vel_rad_s: f64,
    pub omega_ref_rad_s: f64,
    pub current_a: f64,
    pub current_ref_a: f64,
    pub voltage_v: f64,
    pub mode: &'static str,
    pub flags: u8,
}

/// Full run record: config echo in the header, decimated signal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub header: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    /// Serializes the log; `#`-prefixed metadata, then the column header,
    /// then one comma-separated row per record.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{TRACE_COLUMNS}");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t_s,
                r.trunk_rad,
                r.thigh_rad,
                r.shank_rad,
                r.knee_rad,
                r.biological_nm,
                r.reference_nm,
                r.interface_nm,
                r.motor_vel_rad_s,
                r.omega_ref_rad_s,
                r.current_a,
                r.current_ref_a,
                r.voltage_v,
                r.mode,
                r.flags
            );
        }
        out
    }

    /// The key=value pairs of the embedded config echo (header lines minus
    /// the generator metadata).
    pub fn config_echo(&self) -> impl Iterator<Item = (&str, &str)> {
        self.header
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "format" | "generator" | "rng" | "fault"))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Tracking and resistance metrics over the post-settle window.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rms_tracking_error_nm: f64,
    pub peak_abs_interface_nm: f64,
    pub mean_abs_interface_nm: f64,
    pub peak_reference_nm: f64,
    /// `100 * rms / peak_reference`, absent when the reference never left
    /// zero.
    pub rms_error_pct_of_peak: Option<f64>,
    pub cycles: Vec<CycleMetrics>,
    pub settle_skip_s: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMetrics {
    pub index: usize,
    pub rms_tracking_error_nm: f64,
    pub peak_abs_interface_nm: f64,
    pub mean_abs_interface_nm: f64,
    pub peak_reference_nm: f64,
}

#[derive(Debug, Clone)]
struct MetricsAccumulator {
    settle_skip_s: f64,
    cycle_period_s: f64,
    sum_sq_err: f64,
    sum_abs_act: f64,
    peak_abs_act: f64,
    peak_ref: f64,
    n: u64,
    cycles: Vec<CycleAccumulator>,
}

#[derive(Debug, Clone, Copy, Default)]
struct CycleAccumulator {
    sum_sq_err: f64,
    sum_abs_act: f64,
    peak_abs_act: f64,
    peak_ref: f64,
    n: u64,
}

impl MetricsAccumulator {
    fn new(settle_skip_s: f64, cycle_period_s: f64) -> Self {
        MetricsAccumulator {
            settle_skip_s,
            cycle_period_s,
            sum_sq_err: 0.0,
            sum_abs_act: 0.0,
            peak_abs_act: 0.0,
            peak_ref: 0.0,
            n: 0,
            cycles: Vec::new(),
        }
    }

    fn push(&mut self, t_s: f64, reference_nm: f64, interface_nm: f64) {
        if t_s + 1e-12 < self.settle_skip_s {
            return;
        }
        let err = reference_nm - interface_nm;
        self.sum_sq_err += err * err;
        self.sum_abs_act += interface_nm.abs();
        self.peak_abs_act = self.peak_abs_act.max(interface_nm.abs());
        self.peak_ref = self.peak_ref.max(reference_nm.abs());
        self.n += 1;

        let cycle = ((t_s - self.settle_skip_s) / self.cycle_period_s).max(0.0) as usize;
        if cycle >= self.cycles.len() {
            self.cycles.resize(cycle + 1, CycleAccumulator::default());
        }
        let c = &mut self.cycles[cycle];
        c.sum_sq_err += err * err;
        c.sum_abs_act += interface_nm.abs();
        c.peak_abs_act = c.peak_abs_act.max(interface_nm.abs());
        c.peak_ref = c.peak_ref.max(reference_nm.abs());
        c.n += 1;
    }

    fn finalize(&self) -> Result<Metrics, SimError> {
        if self.n == 0 {
            return Err(SimError::EmptyMetricsWindow {
                settle_skip_s: self.settle_skip_s,
            });
        }
        let rms = (self.sum_sq_err / self.n as f64).sqrt();
        Ok(Metrics {
            rms_tracking_error_nm: rms,
            peak_abs_interface_nm: self.peak_abs_act,
            mean_abs_interface_nm: self.sum_abs_act / self.n as f64,
            peak_reference_nm: self.peak_ref,
            rms_error_pct_of_peak: (self.peak_ref > 0.0).then(|| 100.0 * rms / self.peak_ref),
            cycles: self
                .cycles
                .iter()
                .enumerate()
                .filter(|(_, c)| c.n > 0)
                .map(|(i, c)| CycleMetrics {
                    index: i,
                    rms_tracking_error_nm: (c.sum_sq_err / c.n as f64).sqrt(),
                    peak_abs_interface_nm: c.peak_abs_act,
                    mean_abs_interface_nm: c.sum_abs_act / c.n as f64,
                    peak_reference_nm: c.peak_ref,
                })
                .collect(),
            settle_skip_s: self.settle_skip_s,
            samples: self.n,
        })
    }
}

/// Computes metrics from an already-decimated log. The engine's own metrics
/// run at the full base rate; this exists for offline analysis and for the
/// decimation-adequacy check.
pub fn metrics_from_log(
    log: &TraceLog,
    settle_skip_s: f64,
    cycle_period_s: f64,
) -> Result<Metrics, SimError> {
    let mut acc = MetricsAccumulator::new(settle_skip_s, cycle_period_s);
    for r in &log.rows {
        acc.push(r.t_s, r.reference_nm, r.interface_nm);
    }
    acc.finalize()
}

/// Exact tick totals of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TickCounts {
    pub plant_steps: u64,
    pub current: u64,
    pub velocity: u64,
    pub torque: u64,
    pub imu: u64,
}

/// Details of a numerical fault that ended a run early.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultRecord {
    pub t_s: f64,
    pub step: u64,
    pub detail: String,
}

/// Whole-run energy bookkeeping from the plant ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySummary {
    pub electrical_in_j: f64,
    pub mechanical_out_j: f64,
    pub stored_j: f64,
    pub dissipated_j: f64,
}

/// Everything a run produces. A numerical fault leaves a partial log plus
/// the fault record; metrics are absent when the post-settle window is
/// empty.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TraceLog,
    pub metrics: Option<Metrics>,
    pub ticks: TickCounts,
    pub fault: Option<FaultRecord>,
    pub energy: EnergySummary,
    pub warnings: Vec<String>,
}

/// Runs one scenario to completion (or to the first numerical fault).
pub fn run(cfg: &SimConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;

    let mut warnings = Vec::new();
    let table = match &cfg.anthropometry_override {
        Some(path) => reference_segments().with_overrides(path)?,
        None => reference_segments(),
    };
    warnings.extend(table.consistency_warnings());

    let model = build_human_model(cfg.subject_mass_kg, cfg.subject_height_m, &table)?;
    let source = cfg.motion_source()?;
    let duration = cfg.effective_duration_s();
    let stream = imu_stream(&source, &cfg.imu, duration)?;

    let dt = cfg.base_step_s;
    // The loop rates are pinned by the architecture; the IMU rate is
    // configurable but must divide the base step grid exactly.
    let imu_steps = 1.0 / (cfg.imu.sample_rate_hz * dt);
    if imu_steps < 1.0 - 1e-9 || (imu_steps - imu_steps.round()).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "IMU rate {} Hz does not land on the {dt} s base step grid",
            cfg.imu.sample_rate_hz
        )));
    }
    let timing = ControlTiming {
        steps_per_imu: imu_steps.round() as u64,
        ..ControlTiming::default()
    };

    let plant = Plant::new(cfg.plant)?;
    let mode = cfg.control_mode();
    let drive_enabled = mode.drive_enabled();
    let mut control = ControlState::new(mode, cfg.gains, timing)?;
    let mut state = PlantState::at_rest();

    let n_steps = (duration / dt).round() as u64;
    let decim = u64::from(cfg.log_decimation);
    let samples_needed = n_steps.div_ceil(timing.steps_per_imu);
    if (stream.len() as u64) < samples_needed {
        return Err(SimError::Config(format!(
            "IMU stream provides {} samples but the run needs {samples_needed}",
            stream.len()
        )));
    }

    let mut acc = MetricsAccumulator::new(cfg.effective_settle_skip_s(), cfg.metrics_cycle_s());
    let mut rows = Vec::with_capacity((n_steps / decim + 1) as usize);
    let mut fault = None;
    let mut plant_steps = 0u64;

    for step in 0..n_steps {
        let t = step as f64 * dt;

        if step % timing.steps_per_imu == 0 {
            let sample = stream.sample((step / timing.steps_per_imu) as usize);
            control.reference_update(step, sample, &model)?;
        }
        if step % timing.steps_per_torque == 0 {
            control.torque_loop(step, state.interface_torque_nm)?;
        }
        if step % timing.steps_per_velocity == 0 {
            control.velocity_loop(step, state.motor_angle_rad)?;
        }
        let voltage = control.current_loop(step, state.current_a)?;

        if step % decim == 0 {
            rows.push(make_row(t, &control, &state));
        }
        acc.push(t, control.torque_ref_nm, state.interface_torque_nm);

        let (knee, knee_vel) = source.knee_state(t);
        match plant.step(
            &state,
            DriveCommand {
                voltage_v: voltage,
                enabled: drive_enabled,
            },
            knee,
            knee_vel,
            dt,
            t,
        ) {
            Ok(next) => {
                state = next;
                plant_steps += 1;
            }
            Err(SimError::NumericalFault { t_s, detail }) => {
                fault = Some(FaultRecord { t_s, step, detail });
                break;
            }
            Err(other) => return Err(other),
        }
    }

    let control_ticks = control.ticks();
    let ticks = TickCounts {
        plant_steps,
        current: control_ticks.current,
        velocity: control_ticks.velocity,
        torque: control_ticks.torque,
        imu: control_ticks.imu,
    };

    let mut header: Vec<(String, String)> = vec![
        ("format".into(), TRACE_FORMAT.into()),
        (
            "generator".into(),
            format!("exosim-core {}", env!("CARGO_PKG_VERSION")),
        ),
        ("rng".into(), RNG_ALGORITHM.into()),
    ];
    header.extend(cfg.echo());
    if let Some(f) = &fault {
        header.push((
            "fault".into(),
            format!(
                "numerical fault at t = {} s (step {}): {}",
                f.t_s, f.step, f.detail
            ),
        ));
    }

    let energy = EnergySummary {
        electrical_in_j: state.electrical_in_j,
        mechanical_out_j: state.mechanical_out_j,
        stored_j: state.stored_energy_j(plant.params()),
        dissipated_j: state.dissipated_j(plant.params()),
    };

    Ok(RunOutput {
        log: TraceLog { header, rows },
        metrics: acc.finalize().ok(),
        ticks,
        fault,
        energy,
        warnings,
    })
}

fn make_row(t_s: f64, control: &ControlState, state: &PlantState) -> TraceRow {
    let posture = control.posture;
    let mut row_flags = 0u8;
    if control.reference_saturated {
        row_flags |= flags::REFERENCE_CLAMPED;
    }
    if state.load_cell_saturated {
        row_flags |= flags::LOAD_CELL_SATURATED;
    }
    if state.stop_engaged {
        row_flags |= flags::HYPEREXTENSION_STOP;
    }
    if control.sensor_fallback {
        row_flags |= flags::SENSOR_FALLBACK;
    }
    TraceRow {
        t_s,
        trunk_rad: posture.trunk_rad,
        thigh_rad: posture.thigh_rad,
        shank_rad: posture.shank_rad,
        knee_rad: joint_angles(&posture).knee_rad,
        biological_nm: control.biological_nm,
        reference_nm: control.torque_ref_nm,
        interface_nm: state.interface_torque_nm,
        motor_vel_rad_s: state.motor_vel_rad_s,
        omega_ref_rad_s: control.omega_ref_rad_s,
        current_a: state.current_a,
        current_ref_a: control.current_ref_a,
        voltage_v: control.voltage_v,
        mode: control.mode().as_str(),
        flags: row_flags,
    }
}
