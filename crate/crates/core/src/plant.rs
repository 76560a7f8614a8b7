//! Physical model of the actuation chain: motor electrical dynamics, 36:1
//! planetary gear, bidirectional Bowden cable with dead-band and capstan
//! friction, output pulley and load cell, coupled to the prescribed knee
//! motion.
//!
//! The human side is an ideal kinematic source: the knee angle and velocity
//! are inputs, the interface torque is the output. Powered-off operation is
//! an open motor circuit (driver disabled), so the winding carries no
//! current and the only resistance the wearer feels is friction, damping and
//! reflected inertia.

use crate::error::SimError;

/// Brushed-equivalent electrical model of the BLDC motor. Only the 2 Nm
/// continuous rating is hardware-anchored; the electrical constants are
/// simulator defaults, tunable through the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Torque constant k_t (Nm/A).
    pub torque_constant_nm_a: f64,
    /// Back-EMF constant k_e (V s/rad).
    pub back_emf_v_s_rad: f64,
    /// Winding resistance (ohm).
    pub resistance_ohm: f64,
    /// Winding inductance (H).
    pub inductance_h: f64,
    /// Rotor inertia (kg m^2).
    pub rotor_inertia_kg_m2: f64,
    /// Viscous damping at the rotor (Nm s/rad).
    pub viscous_damping_nm_s_rad: f64,
    /// Continuous torque rating (Nm).
    pub continuous_torque_nm: f64,
    /// Supply voltage limit (V).
    pub voltage_limit_v: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            torque_constant_nm_a: 0.14,
            back_emf_v_s_rad: 0.14,
            resistance_ohm: 0.4,
            inductance_h: 0.3e-3,
            rotor_inertia_kg_m2: 1.2e-4,
            viscous_damping_nm_s_rad: 1.0e-3,
            continuous_torque_nm: 2.0,
            voltage_limit_v: 48.0,
        }
    }
}

impl MotorParams {
    /// Continuous current rating implied by the torque rating (A).
    pub fn continuous_current_a(&self) -> f64 {
        self.continuous_torque_nm / self.torque_constant_nm_a
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("torque constant", self.torque_constant_nm_a),
            ("back-EMF constant", self.back_emf_v_s_rad),
            ("resistance", self.resistance_ohm),
            ("inductance", self.inductance_h),
            ("rotor inertia", self.rotor_inertia_kg_m2),
            ("continuous torque", self.continuous_torque_nm),
            ("voltage limit", self.voltage_limit_v),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!(
                    "motor {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.viscous_damping_nm_s_rad.is_finite() && self.viscous_damping_nm_s_rad >= 0.0) {
            return Err(SimError::Config(format!(
                "motor viscous damping must be non-negative, got {}",
                self.viscous_damping_nm_s_rad
            )));
        }
        Ok(())
    }
}

/// Bowden cable transmission parameters, all reflected to the output pulley.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableParams {
    /// Series stiffness (Nm/rad).
    pub stiffness_nm_rad: f64,
    /// Backlash half-width before pretension take-up (rad).
    pub backlash_rad: f64,
    /// Coulomb friction coefficient of cable on conduit.
    pub friction_mu: f64,
    /// Total conduit wrap angle (rad).
    pub wrap_angle_rad: f64,
    /// Viscous loss on relative motion (Nm s/rad).
    pub viscous_nm_s_rad: f64,
    /// Preload take-up; shrinks the effective dead-band (rad).
    pub pretension_rad: f64,
}

// Calibrated so the default scenarios land on the hardware-reported
// backdrivability and tracking figures: unpowered peak near 2.6 Nm, zero-
// torque mean near 0.3 Nm, assist tracking within a few percent of peak.
impl Default for CableParams {
    fn default() -> Self {
        CableParams {
            stiffness_nm_rad: 1000.0,
            backlash_rad: 0.02,
            friction_mu: 0.05,
            wrap_angle_rad: std::f64::consts::PI,
            viscous_nm_s_rad: 0.5,
            pretension_rad: 0.01,
        }
    }
}

impl CableParams {
    /// Dead-band half-width that survives pretension (rad).
    pub fn effective_deadband_rad(&self) -> f64 {
        (self.backlash_rad - self.pretension_rad).max(0.0)
    }

    /// Tension attenuation across the wrapped conduit in the driving
    /// direction, `exp(-mu * wrap)`.
    pub fn capstan_attenuation(&self) -> f64 {
        (-self.friction_mu * self.wrap_angle_rad).exp()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.stiffness_nm_rad.is_finite() && self.stiffness_nm_rad > 0.0) {
            return Err(SimError::Config(format!(
                "cable stiffness must be positive, got {}",
                self.stiffness_nm_rad
            )));
        }
        for (name, v) in [
            ("backlash", self.backlash_rad),
            ("friction coefficient", self.friction_mu),
            ("wrap angle", self.wrap_angle_rad),
            ("viscous loss", self.viscous_nm_s_rad),
            ("pretension", self.pretension_rad),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!(
                    "cable {name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Planetary gear stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GearParams {
    pub ratio: f64,
    pub efficiency: f64,
}

impl Default for GearParams {
    fn default() -> Self {
        GearParams {
            ratio: 36.0,
            efficiency: 1.0,
        }
    }
}

impl GearParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return Err(SimError::Config(format!(
                "gear ratio must be positive, got {}",
                self.ratio
            )));
        }
        if !(self.efficiency.is_finite() && self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(SimError::Config(format!(
                "gear efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }
}

/// Everything the plant needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub motor: MotorParams,
    pub cable: CableParams,
    pub gear: GearParams,
    /// Load-cell measurement range (Nm); values beyond are clamped and
    /// flagged.
    pub load_cell_limit_nm: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            motor: MotorParams::default(),
            cable: CableParams::default(),
            gear: GearParams::default(),
            load_cell_limit_nm: 50.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), SimError> {
        self.motor.validate()?;
        self.cable.validate()?;
        self.gear.validate()?;
        if !(self.load_cell_limit_nm.is_finite() && self.load_cell_limit_nm > 0.0) {
            return Err(SimError::Config(format!(
                "load cell limit must be positive, got {}",
                self.load_cell_limit_nm
            )));
        }
        Ok(())
    }
}

/// Dynamic state of the actuation chain plus run-length energy accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub current_a: f64,
    pub motor_vel_rad_s: f64,
    pub motor_angle_rad: f64,
    /// Elastic cable stretch at the output (rad).
    pub cable_deflection_rad: f64,
    /// Position inside the backlash dead-band (rad), confined to
    /// [-effective dead-band, +effective dead-band].
    pub backlash_position_rad: f64,
    /// Measured interface torque after the load-cell clamp (Nm).
    pub interface_torque_nm: f64,
    pub load_cell_saturated: bool,
    pub stop_engaged: bool,
    /// Integral of electrical input power (J).
    pub electrical_in_j: f64,
    /// Integral of mechanical power delivered to the wearer (J).
    pub mechanical_out_j: f64,
}

impl PlantState {
    pub fn at_rest() -> Self {
        PlantState {
            current_a: 0.0,
            motor_vel_rad_s: 0.0,
            motor_angle_rad: 0.0,
            cable_deflection_rad: 0.0,
            backlash_position_rad: 0.0,
            interface_torque_nm: 0.0,
            load_cell_saturated: false,
            stop_engaged: false,
            electrical_in_j: 0.0,
            mechanical_out_j: 0.0,
        }
    }

    /// Energy currently stored in winding inductance, rotor inertia and
    /// cable stretch (J).
    pub fn stored_energy_j(&self, p: &PlantParams) -> f64 {
        0.5 * p.motor.inductance_h * self.current_a * self.current_a
            + 0.5 * p.motor.rotor_inertia_kg_m2 * self.motor_vel_rad_s * self.motor_vel_rad_s
            + 0.5 * p.cable.stiffness_nm_rad * self.cable_deflection_rad * self.cable_deflection_rad
    }

    /// Energy lost to resistance and friction since rest (J). Non-negative
    /// for a physical run.
    pub fn dissipated_j(&self, p: &PlantParams) -> f64 {
        self.electrical_in_j - self.mechanical_out_j - self.stored_energy_j(p)
    }

    fn check_finite(&self, t_s: f64) -> Result<(), SimError> {
        let fields = [
            self.current_a,
            self.motor_vel_rad_s,
            self.motor_angle_rad,
            self.cable_deflection_rad,
            self.backlash_position_rad,
            self.interface_torque_nm,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NumericalFault {
                t_s,
                detail: format!("non-finite plant state: {self:?}"),
            });
        }
        Ok(())
    }
}

/// Voltage command plus whether the drive stage is energized. A disabled
/// drive leaves the winding open: no current, no braking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCommand {
    pub voltage_v: f64,
    pub enabled: bool,
}

/// Ideal gear stage: torque times ratio, speed divided by ratio, with the
/// efficiency applied in the direction of power flow.
pub fn gearbox(
    motor_torque_nm: f64,
    motor_speed_rad_s: f64,
    ratio: f64,
    efficiency: f64,
) -> (f64, f64) {
    debug_assert!(efficiency > 0.0 && efficiency <= 1.0);
    let forward = motor_torque_nm * motor_speed_rad_s >= 0.0;
    let output_torque = if forward {
        motor_torque_nm * ratio * efficiency
    } else {
        motor_torque_nm * ratio / efficiency
    };
    (output_torque, motor_speed_rad_s / ratio)
}

/// Relative kinematics across the cable: gear output on one side, knee
/// pulley on the other.
#[derive(Debug, Clone, Copy)]
pub struct CableKinematics {
    pub gear_angle_rad: f64,
    pub gear_vel_rad_s: f64,
    pub pulley_angle_rad: f64,
    pub pulley_vel_rad_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableOutput {
    /// Torque delivered to the pulley after capstan attenuation (Nm).
    pub pulley_torque_nm: f64,
    /// Torque loading the gear output, before attenuation (Nm).
    pub gear_load_nm: f64,
    pub deflection_rad: f64,
    pub backlash_position_rad: f64,
}

/// Power threshold (W) for the smooth sliding-direction blend of the
/// capstan factor.
const CAPSTAN_POWER_EPS_W: f64 = 1e-6;

/// Transmits torque across the dead-band, spring, damper and wrapped
/// conduit.
///
/// Inside the effective dead-band both cables are slack and nothing is
/// transmitted. Outside it the elastic torque `k_c * deflection + c_v *
/// relative speed` loads the gear directly; the pulley side is scaled by
/// `exp(-mu * wrap)` when power flows into the pulley and `exp(+mu * wrap)`
/// when the pulley back-drives. Friction therefore always takes
/// `(gear load - pulley torque) * pulley speed >= 0` out of the chain, and
/// the direction asymmetry is what opens the hysteresis loop.
pub fn cable_transmit(cable: &CableParams, k: &CableKinematics) -> CableOutput {
    let x = k.gear_angle_rad - k.pulley_angle_rad;
    let xdot = k.gear_vel_rad_s - k.pulley_vel_rad_s;
    let dead = cable.effective_deadband_rad();
    let backlash_position = x.clamp(-dead, dead);
    let deflection = x - backlash_position;

    if deflection == 0.0 {
        return CableOutput {
            pulley_torque_nm: 0.0,
            gear_load_nm: 0.0,
            deflection_rad: 0.0,
            backlash_position_rad: backlash_position,
        };
    }

    let elastic = cable.stiffness_nm_rad * deflection + cable.viscous_nm_s_rad * xdot;
    // Sliding direction from the power crossing into the pulley; tanh keeps
    // the reversal smooth and leaves statics unattenuated.
    let slide = (elastic * k.pulley_vel_rad_s / CAPSTAN_POWER_EPS_W).tanh();
    let pulley = elastic * (-cable.friction_mu * cable.wrap_angle_rad * slide).exp();
    CableOutput {
        pulley_torque_nm: pulley,
        gear_load_nm: elastic,
        deflection_rad: deflection,
        backlash_position_rad: backlash_position,
    }
}

/// The actuation chain with fixed parameters.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
}

impl Plant {
    pub fn new(params: PlantParams) -> Result<Plant, SimError> {
        params.validate()?;
        Ok(Plant { params })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    /// Advances the motor electrical and mechanical state by one base step
    /// using semi-implicit Euler: the current update is implicit in the
    /// current, the velocity update is implicit in the velocity and uses the
    /// fresh current. `load_torque_nm` is taken at the gear output and
    /// reflected through the ratio.
    pub fn motor_step(
        &self,
        state: &PlantState,
        voltage_v: f64,
        load_torque_nm: f64,
        dt_s: f64,
    ) -> Result<PlantState, SimError> {
        debug_assert!(dt_s > 0.0 && dt_s <= 5e-6 + 1e-12);
        let mut next = *state;
        let (current, vel, angle, applied) =
            self.advance_motor(state, Some(voltage_v), load_torque_nm, dt_s);
        next.current_a = current;
        next.motor_vel_rad_s = vel;
        next.motor_angle_rad = angle;
        next.electrical_in_j += applied * current * dt_s;
        next.check_finite(f64::NAN)?;
        Ok(next)
    }

    fn advance_motor(
        &self,
        state: &PlantState,
        voltage_v: Option<f64>,
        load_torque_nm: f64,
        dt_s: f64,
    ) -> (f64, f64, f64, f64) {
        let m = &self.params.motor;
        let (current, applied) = match voltage_v {
            Some(v) => {
                let v = v.clamp(-m.voltage_limit_v, m.voltage_limit_v);
                let i = (state.current_a
                    + dt_s / m.inductance_h * (v - m.back_emf_v_s_rad * state.motor_vel_rad_s))
                    / (1.0 + dt_s * m.resistance_ohm / m.inductance_h);
                (i, v)
            }
            // Open circuit: the driver is off, no current path.
            None => (0.0, 0.0),
        };
        let torque = m.torque_constant_nm_a * current;
        let vel = (state.motor_vel_rad_s
            + dt_s / m.rotor_inertia_kg_m2 * (torque - load_torque_nm / self.params.gear.ratio))
            / (1.0 + dt_s * m.viscous_damping_nm_s_rad / m.rotor_inertia_kg_m2);
        let angle = state.motor_angle_rad + dt_s * vel;
        (current, vel, angle, applied)
    }

    /// One base step of the whole chain against the prescribed knee motion.
    pub fn step(
        &self,
        state: &PlantState,
        cmd: DriveCommand,
        knee_angle_rad: f64,
        knee_vel_rad_s: f64,
        dt_s: f64,
        t_s: f64,
    ) -> Result<PlantState, SimError> {
        let p = &self.params;
        let gear_angle = state.motor_angle_rad / p.gear.ratio;
        let gear_vel = state.motor_vel_rad_s / p.gear.ratio;
        let cable = cable_transmit(
            &p.cable,
            &CableKinematics {
                gear_angle_rad: gear_angle,
                gear_vel_rad_s: gear_vel,
                pulley_angle_rad: knee_angle_rad,
                pulley_vel_rad_s: knee_vel_rad_s,
            },
        );

        // The locking mechanism is a rigid unilateral stop: extension torque
        // at or past full extension goes into the structure, not the leg.
        let (interface_physical, stop_engaged) =
            if knee_angle_rad >= 0.0 && cable.pulley_torque_nm > 0.0 {
                (0.0, true)
            } else {
                (cable.pulley_torque_nm, false)
            };

        let load_cell_saturated = interface_physical.abs() > p.load_cell_limit_nm;
        let measured = interface_physical.clamp(-p.load_cell_limit_nm, p.load_cell_limit_nm);

        // Reflect the cable load through the gear with the efficiency applied
        // in the power-flow direction.
        let load_output = if cable.gear_load_nm * gear_vel >= 0.0 {
            cable.gear_load_nm / p.gear.efficiency
        } else {
            cable.gear_load_nm * p.gear.efficiency
        };

        let drive = if cmd.enabled {
            Some(cmd.voltage_v)
        } else {
            None
        };
        let (current, vel, angle, applied) = self.advance_motor(state, drive, load_output, dt_s);

        let next = PlantState {
            current_a: current,
            motor_vel_rad_s: vel,
            motor_angle_rad: angle,
            cable_deflection_rad: cable.deflection_rad,
            backlash_position_rad: cable.backlash_position_rad,
            interface_torque_nm: measured,
            load_cell_saturated,
            stop_engaged,
            electrical_in_j: state.electrical_in_j + applied * current * dt_s,
            mechanical_out_j: state.mechanical_out_j + interface_physical * knee_vel_rad_s * dt_s,
        };
        next.check_finite(t_s)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{MotionSource, TrajectoryParams};

    const DT: f64 = 5e-6;

    fn default_plant() -> Plant {
        Plant::new(PlantParams::default()).unwrap()
    }

    #[test]
    fn equilibrium_state_stays_put() {
        let plant = default_plant();
        let s = PlantState::at_rest();
        let next = plant.motor_step(&s, 0.0, 0.0, DT).unwrap();
        assert_eq!(next.current_a, 0.0);
        assert_eq!(next.motor_vel_rad_s, 0.0);
        assert_eq!(next.motor_angle_rad, 0.0);
    }

    #[test]
    fn no_load_steady_state_matches_analytic_fixed_point() {
        let plant = default_plant();
        let m = plant.params().motor;
        let v = 12.0;
        // Fixed point of the two ODEs: omega = V kt / (ke kt + R b).
        let expected = v * m.torque_constant_nm_a
            / (m.back_emf_v_s_rad * m.torque_constant_nm_a
                + m.resistance_ohm * m.viscous_damping_nm_s_rad);
        let mut s = PlantState::at_rest();
        for _ in 0..200_000 {
            s = plant.motor_step(&s, v, 0.0, DT).unwrap();
        }
        assert!(
            (s.motor_vel_rad_s - expected).abs() <= 1e-3 * expected,
            "got {} want {expected}",
            s.motor_vel_rad_s
        );
    }

    #[test]
    fn voltage_is_clamped_to_supply() {
        let plant = default_plant();
        let mut s = PlantState::at_rest();
        for _ in 0..2_000 {
            s = plant.motor_step(&s, 500.0, 0.0, DT).unwrap();
        }
        let mut clamped = PlantState::at_rest();
        for _ in 0..2_000 {
            clamped = plant.motor_step(&clamped, 48.0, 0.0, DT).unwrap();
        }
        assert_eq!(s.current_a, clamped.current_a);
    }

    #[test]
    fn continuous_rating_through_ideal_gear_is_72_nm() {
        let m = MotorParams::default();
        let torque = m.torque_constant_nm_a * m.continuous_current_a();
        assert!((torque - 2.0).abs() < 1e-12);
        let (out_torque, out_speed) = gearbox(torque, 156.96, 36.0, 1.0);
        assert!((out_torque - 72.0).abs() < 1e-9);
        assert!((out_speed - 4.36).abs() < 1e-12);
    }

    #[test]
    fn gearbox_examples() {
        let (t, w) = gearbox(0.0, 10.0, 36.0, 0.8);
        assert_eq!(t, 0.0);
        assert!((w - 10.0 / 36.0).abs() < 1e-15);

        let (t, w) = gearbox(1.0, 36.0, 36.0, 0.9);
        assert!((t - 32.4).abs() < 1e-12);
        assert!((w - 1.0).abs() < 1e-15);

        // Reverse power flow: the motor receives less than the ideal share.
        let (t, _) = gearbox(1.0, -36.0, 36.0, 0.9);
        assert!((t - 40.0).abs() < 1e-12);
    }

    #[test]
    fn cable_dead_band_transmits_nothing() {
        let cable = CableParams::default();
        let dead = cable.effective_deadband_rad();
        assert!((dead - 0.01).abs() < 1e-15);
        let out = cable_transmit(
            &cable,
            &CableKinematics {
                gear_angle_rad: 0.5 * dead,
                gear_vel_rad_s: 1.0,
                pulley_angle_rad: 0.0,
                pulley_vel_rad_s: 0.0,
            },
        );
        assert_eq!(out.pulley_torque_nm, 0.0);
        assert_eq!(out.gear_load_nm, 0.0);
        assert_eq!(out.deflection_rad, 0.0);
        assert!(out.backlash_position_rad.abs() <= dead);
    }

    #[test]
    fn capstan_fraction_matches_exponential() {
        // mu = 0.1, wrap = pi: transmitted fraction e^(-0.1 pi), evaluated
        // independently as 0.7304026910486456.
        let cable = CableParams {
            friction_mu: 0.1,
            wrap_angle_rad: std::f64::consts::PI,
            backlash_rad: 0.0,
            pretension_rad: 0.0,
            viscous_nm_s_rad: 0.0,
            ..CableParams::default()
        };
        let out = cable_transmit(
            &cable,
            &CableKinematics {
                gear_angle_rad: 0.1,
                gear_vel_rad_s: 2.0,
                pulley_angle_rad: 0.0,
                pulley_vel_rad_s: 2.0, // pulley being driven: tanh saturates to 1
            },
        );
        let tension = cable.stiffness_nm_rad * 0.1;
        let fraction = out.pulley_torque_nm / tension;
        assert!((fraction - 0.7304026910486456).abs() < 1e-12);

        // A back-driving pulley feels the friction on top of the tension.
        let back = cable_transmit(
            &cable,
            &CableKinematics {
                gear_angle_rad: 0.1,
                gear_vel_rad_s: -2.0,
                pulley_angle_rad: 0.0,
                pulley_vel_rad_s: -2.0,
            },
        );
        assert!(
            (back.pulley_torque_nm / tension - (0.1 * std::f64::consts::PI).exp()).abs() < 1e-12
        );
    }

    #[test]
    fn zero_wrap_is_lossless_apart_from_viscous() {
        let cable = CableParams {
            wrap_angle_rad: 0.0,
            backlash_rad: 0.0,
            pretension_rad: 0.0,
            ..CableParams::default()
        };
        let out = cable_transmit(
            &cable,
            &CableKinematics {
                gear_angle_rad: 0.05,
                gear_vel_rad_s: 1.5,
                pulley_angle_rad: 0.0,
                pulley_vel_rad_s: 0.5,
            },
        );
        let expected = cable.stiffness_nm_rad * 0.05 + cable.viscous_nm_s_rad * 1.0;
        assert!((out.pulley_torque_nm - expected).abs() < 1e-12);
        assert_eq!(out.pulley_torque_nm, out.gear_load_nm);
    }

    #[test]
    fn stationary_knee_torque_decays() {
        let plant = default_plant();
        let mut s = PlantState::at_rest();
        // Start with the cable wound up well past the dead-band.
        s.motor_angle_rad = 0.06 * plant.params().gear.ratio;
        let mut steps = 0usize;
        for _ in 0..(4.0 / DT) as usize {
            s = plant
                .step(
                    &s,
                    DriveCommand {
                        voltage_v: 0.0,
                        enabled: true,
                    },
                    -0.2,
                    0.0,
                    DT,
                    0.0,
                )
                .unwrap();
            steps += 1;
        }
        assert!(steps > 0);
        assert!(
            s.interface_torque_nm.abs() < 0.01,
            "residual torque {}",
            s.interface_torque_nm
        );
        assert!(s.motor_vel_rad_s.abs() < 0.01);
    }

    #[test]
    fn hyperextension_stop_absorbs_extension_torque_at_full_extension() {
        let plant = default_plant();
        let mut s = PlantState::at_rest();
        s.motor_angle_rad = 0.08 * plant.params().gear.ratio;
        let next = plant
            .step(
                &s,
                DriveCommand {
                    voltage_v: 0.0,
                    enabled: false,
                },
                0.0,
                0.0,
                DT,
                0.0,
            )
            .unwrap();
        assert!(next.stop_engaged);
        assert_eq!(next.interface_torque_nm, 0.0);

        // Same stretch against a flexed knee transmits normally.
        let flexed = plant
            .step(
                &s,
                DriveCommand {
                    voltage_v: 0.0,
                    enabled: false,
                },
                -0.5,
                0.0,
                DT,
                0.0,
            )
            .unwrap();
        assert!(!flexed.stop_engaged);
        assert!(flexed.interface_torque_nm > 0.0);
    }

    #[test]
    fn load_cell_clamps_and_flags() {
        let plant = default_plant();
        let mut s = PlantState::at_rest();
        // Enough stretch for well over 50 Nm at the pulley.
        s.motor_angle_rad = 0.5 * plant.params().gear.ratio;
        let next = plant
            .step(
                &s,
                DriveCommand {
                    voltage_v: 0.0,
                    enabled: false,
                },
                -0.5,
                0.0,
                DT,
                0.0,
            )
            .unwrap();
        assert!(next.load_cell_saturated);
        assert_eq!(next.interface_torque_nm, 50.0);
    }

    /// Runs the unpowered plant through prescribed squat cycles and returns
    /// (peak |tau_a|, mean |tau_a|, dissipated energy, per-cycle work on the
    /// wearer).
    fn unpowered_squat(plant: &Plant, cycles: u32) -> (f64, f64, f64, Vec<f64>) {
        let mut traj = TrajectoryParams::squat();
        traj.cycles = cycles;
        let src = MotionSource::Prescribed(traj);
        let mut s = PlantState::at_rest();
        let n = (traj.duration_s() / DT).round() as usize;
        let mut peak = 0.0f64;
        let mut sum = 0.0f64;
        let mut cycle_work = vec![0.0f64; cycles as usize];
        let mut last_mech = 0.0;
        for k in 0..n {
            let t = k as f64 * DT;
            let (knee, knee_vel) = src.knee_state(t);
            s = plant
                .step(
                    &s,
                    DriveCommand {
                        voltage_v: 0.0,
                        enabled: false,
                    },
                    knee,
                    knee_vel,
                    DT,
                    t,
                )
                .unwrap();
            peak = peak.max(s.interface_torque_nm.abs());
            sum += s.interface_torque_nm.abs();
            let cycle = ((t / traj.cycle_period_s) as usize).min(cycles as usize - 1);
            cycle_work[cycle] += s.mechanical_out_j - last_mech;
            last_mech = s.mechanical_out_j;
        }
        (
            peak,
            sum / n as f64,
            s.dissipated_j(plant.params()),
            cycle_work,
        )
    }

    #[test]
    fn unpowered_squat_peak_lands_in_band() {
        let plant = default_plant();
        let (peak, mean, _, _) = unpowered_squat(&plant, 2);
        assert!(
            (1.5..=3.5).contains(&peak),
            "unpowered peak {peak} Nm outside [1.5, 3.5] (mean {mean})"
        );
    }

    #[test]
    fn unpowered_plant_is_passive() {
        let plant = default_plant();
        let (_, _, dissipated, cycle_work) = unpowered_squat(&plant, 3);
        assert!(dissipated >= -1e-9, "dissipated {dissipated} J");
        for (i, w) in cycle_work.iter().enumerate() {
            assert!(*w <= 1e-3, "cycle {i} injected {w} J into the wearer");
        }
    }

    #[test]
    fn hysteresis_loop_area_nonnegative_and_sourced_by_friction() {
        // Cyclic motion on both ports of the cable; the enclosed loop area
        // equals the net work the two ports push in per cycle, which is what
        // friction removes. The spring itself contributes nothing net.
        let area = |cable: &CableParams| -> f64 {
            let amp = 0.08;
            let w = 2.0 * std::f64::consts::PI;
            let n = 40_000usize;
            let dt = 1.0 / n as f64;
            let mut a = 0.0;
            for i in 0..n {
                let t = i as f64 * dt;
                let gear = amp * (w * t).sin();
                let gear_vel = amp * w * (w * t).cos();
                let pulley = 0.6 * amp * (w * t).sin();
                let pulley_vel = 0.6 * amp * w * (w * t).cos();
                let out = cable_transmit(
                    cable,
                    &CableKinematics {
                        gear_angle_rad: gear,
                        gear_vel_rad_s: gear_vel,
                        pulley_angle_rad: pulley,
                        pulley_vel_rad_s: pulley_vel,
                    },
                );
                a += (out.gear_load_nm * gear_vel - out.pulley_torque_nm * pulley_vel) * dt;
            }
            a
        };

        let lossy = CableParams::default();
        assert!(area(&lossy) > 0.0);

        let frictionless = CableParams {
            friction_mu: 0.0,
            viscous_nm_s_rad: 0.0,
            ..CableParams::default()
        };
        assert!(area(&frictionless).abs() < 1e-9);

        let only_viscous = CableParams {
            friction_mu: 0.0,
            viscous_nm_s_rad: 0.2,
            backlash_rad: 0.0,
            pretension_rad: 0.0,
            ..CableParams::default()
        };
        assert!(area(&only_viscous) > 0.0);

        let only_capstan = CableParams {
            friction_mu: 0.2,
            viscous_nm_s_rad: 0.0,
            backlash_rad: 0.0,
            pretension_rad: 0.0,
            ..CableParams::default()
        };
        assert!(area(&only_capstan) > 0.0);
    }

    // Friction can only remove energy, whatever the two ports do.
    #[test]
    fn cable_element_is_passive_for_arbitrary_motion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let cable = CableParams::default();
        for _ in 0..2_000 {
            let k = CableKinematics {
                gear_angle_rad: rng.gen_range(-0.3..0.3),
                gear_vel_rad_s: rng.gen_range(-5.0..5.0),
                pulley_angle_rad: rng.gen_range(-0.3..0.3),
                pulley_vel_rad_s: rng.gen_range(-5.0..5.0),
            };
            let out = cable_transmit(&cable, &k);
            let friction_power = (out.gear_load_nm - out.pulley_torque_nm) * k.pulley_vel_rad_s;
            assert!(
                friction_power >= -1e-12,
                "friction injected energy: {friction_power} W at {k:?}"
            );
        }
    }

    #[test]
    fn friction_increases_unpowered_resistance_monotonically() {
        let mut peaks = Vec::new();
        for mu in [0.0, 0.1, 0.2] {
            let mut params = PlantParams::default();
            params.cable.friction_mu = mu;
            let plant = Plant::new(params).unwrap();
            peaks.push(unpowered_squat(&plant, 1).0);
        }
        assert!(peaks[0] < peaks[1] && peaks[1] < peaks[2], "{peaks:?}");
    }

    #[test]
    fn nan_input_raises_numerical_fault() {
        let plant = default_plant();
        let mut s = PlantState::at_rest();
        s.current_a = f64::NAN;
        let err = plant.step(
            &s,
            DriveCommand {
                voltage_v: 0.0,
                enabled: true,
            },
            0.0,
            0.0,
            DT,
            1.25,
        );
        assert!(matches!(err, Err(SimError::NumericalFault { .. })));
    }

    #[test]
    fn params_validation_rejects_nonsense() {
        let mut p = PlantParams::default();
        p.gear.efficiency = 1.5;
        assert!(Plant::new(p).is_err());
        let mut p = PlantParams::default();
        p.motor.inductance_h = 0.0;
        assert!(Plant::new(p).is_err());
        let mut p = PlantParams::default();
        p.cable.stiffness_nm_rad = -1.0;
        assert!(Plant::new(p).is_err());
    }
}
