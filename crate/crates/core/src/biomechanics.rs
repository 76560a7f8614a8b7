//! Joint angles, the quasi-static knee torque estimate, and the assistive
//! torque reference.
//!
//! Angle conventions: trunk, thigh and shank angles are zero at upright
//! stance with a common clockwise-positive sign in the sagittal plane.
//! Knee and hip angles are extension-positive. Everything is radians; degrees
//! exist only at the CLI and file boundary.

use crate::anthropometry::HumanModel;
use crate::error::SimError;

/// Gravitational acceleration (m/s^2).
pub const GRAVITY_M_S2: f64 = 9.81;
/// Continuous torque rating of the actuator at the knee (Nm): 2 Nm motor
/// through the 36:1 gear.
pub const ACTUATOR_TORQUE_LIMIT_NM: f64 = 72.0;
/// Default bound on the assistance gain magnitude.
pub const DEFAULT_GAIN_LIMIT: f64 = 1.0;

/// Segment angles measured by the IMUs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posture {
    pub trunk_rad: f64,
    pub thigh_rad: f64,
    pub shank_rad: f64,
}

impl Posture {
    pub const UPRIGHT: Posture = Posture {
        trunk_rad: 0.0,
        thigh_rad: 0.0,
        shank_rad: 0.0,
    };

    /// Validates that all angles are finite and within one half turn,
    /// guarding against unwrapped sensor input.
    pub fn new(trunk_rad: f64, thigh_rad: f64, shank_rad: f64) -> Result<Posture, SimError> {
        for (name, v) in [
            ("trunk", trunk_rad),
            ("thigh", thigh_rad),
            ("shank", shank_rad),
        ] {
            if !v.is_finite() {
                return Err(SimError::InvalidPosture(format!(
                    "{name} angle is not finite ({v})"
                )));
            }
            if v.abs() > std::f64::consts::PI {
                return Err(SimError::InvalidPosture(format!(
                    "{name} angle {v} rad exceeds half a turn; input looks unwrapped"
                )));
            }
        }
        Ok(Posture {
            trunk_rad,
            thigh_rad,
            shank_rad,
        })
    }
}

/// Extension-positive knee and hip angles derived from a posture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles {
    pub knee_rad: f64,
    pub hip_rad: f64,
}

/// Knee angle is thigh minus shank, hip angle is thigh minus trunk.
pub fn joint_angles(p: &Posture) -> JointAngles {
    JointAngles {
        knee_rad: p.thigh_rad - p.shank_rad,
        hip_rad: p.thigh_rad - p.trunk_rad,
    }
}

/// Quasi-static estimate of the biological knee torque (Nm, extension
/// positive) from the gravitational loading of the upper body and thigh:
///
/// ```text
/// tau = -0.5 * [ M_b*g*(L_b*sin(trunk) + L_t*sin(thigh)) + M_t*g*L_tc*sin(thigh) ]
/// ```
///
/// The 0.5 splits the load over two legs. The shank angle does not enter.
pub fn biological_knee_torque(model: &HumanModel, posture: &Posture) -> f64 {
    let sin_trunk = posture.trunk_rad.sin();
    let sin_thigh = posture.thigh_rad.sin();
    -0.5 * (model.upper_body_mass_kg
        * GRAVITY_M_S2
        * (model.upper_body_com_lever_m * sin_trunk + model.thigh_length_m * sin_thigh)
        + model.thigh_mass_kg * GRAVITY_M_S2 * model.thigh_com_lever_m * sin_thigh)
}

/// The assistive torque reference: gain times the biological estimate,
/// clamped to the actuator's continuous rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueReference {
    /// Biological knee torque estimate (Nm).
    pub biological_nm: f64,
    /// Assistance gain. Positive assists, negative resists.
    pub gain: f64,
    /// Reference after clamping to the actuator limit (Nm).
    pub reference_nm: f64,
    /// True when the pre-clamp value exceeded the actuator limit.
    pub saturated: bool,
}

/// Computes `gain * biological`, clamped to +/-72 Nm. Clamping is flagged,
/// not silent. Gains outside [-1, 1] are rejected.
pub fn assistive_reference(biological_nm: f64, gain: f64) -> Result<TorqueReference, SimError> {
    if !gain.is_finite() || gain.abs() > DEFAULT_GAIN_LIMIT {
        return Err(SimError::GainOutOfRange {
            gain,
            limit: DEFAULT_GAIN_LIMIT,
        });
    }
    let raw = gain * biological_nm;
    let reference_nm = raw.clamp(-ACTUATOR_TORQUE_LIMIT_NM, ACTUATOR_TORQUE_LIMIT_NM);
    Ok(TorqueReference {
        biological_nm,
        gain,
        reference_nm,
        saturated: raw != reference_nm,
    })
}
