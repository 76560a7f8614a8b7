//! Reference body-segment parameters and subject-scaled human models.
//!
//! The reference table holds per-segment masses and center-of-mass heights
//! for an 81.4 kg / 1.784 m adult male, plus the hip and knee pivot heights.
//! A subject model is produced by scaling masses with the weight ratio and
//! lengths with the height ratio.

use std::path::Path;

use crate::error::SimError;

/// Reference total body mass (kg).
pub const REFERENCE_TOTAL_MASS_KG: f64 = 81.4;
/// Reference standing height (m).
pub const REFERENCE_TOTAL_HEIGHT_M: f64 = 1.784;

/// One row of the segment table. Entries 1-11 are body segments with a mass
/// and a center-of-mass height above ground; entries 12-13 are the hip and
/// knee pivot heights and carry no mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub name: &'static str,
    pub mass_kg: Option<f64>,
    pub height_m: f64,
}

/// The 13-entry segment table together with the reference totals.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTable {
    segments: [Segment; 13],
    total_mass_kg: f64,
    total_height_m: f64,
}

const REFERENCE_SEGMENTS: [Segment; 13] = [
    Segment {
        name: "Head",
        mass_kg: Some(4.2),
        height_m: 1.679,
    },
    Segment {
        name: "Neck",
        mass_kg: Some(1.1),
        height_m: 1.545,
    },
    Segment {
        name: "Thorax",
        mass_kg: Some(24.9),
        height_m: 1.308,
    },
    Segment {
        name: "Abdomen",
        mass_kg: Some(2.4),
        height_m: 1.099,
    },
    Segment {
        name: "Pelvis",
        mass_kg: Some(11.8),
        height_m: 0.983,
    },
    Segment {
        name: "Arms",
        mass_kg: Some(4.0),
        height_m: 1.285,
    },
    Segment {
        name: "Forearms",
        mass_kg: Some(2.8),
        height_m: 1.027,
    },
    Segment {
        name: "Hands",
        mass_kg: Some(1.0),
        height_m: 0.792,
    },
    Segment {
        name: "Thighs",
        mass_kg: Some(19.6),
        height_m: 0.75,
    },
    Segment {
        name: "Calfs",
        mass_kg: Some(7.6),
        height_m: 0.33,
    },
    Segment {
        name: "Feet",
        mass_kg: Some(2.0),
        height_m: 0.028,
    },
    Segment {
        name: "Hip Pivot to Ground",
        mass_kg: None,
        height_m: 0.946,
    },
    Segment {
        name: "Knee Pivot to Ground",
        mass_kg: None,
        height_m: 0.505,
    },
];

/// Returns the built-in reference segment table.
pub fn reference_segments() -> SegmentTable {
    SegmentTable {
        segments: REFERENCE_SEGMENTS,
        total_mass_kg: REFERENCE_TOTAL_MASS_KG,
        total_height_m: REFERENCE_TOTAL_HEIGHT_M,
    }
}

impl SegmentTable {
    /// 1-based segment access matching the table numbering.
    pub fn entry(&self, index: usize) -> Option<&Segment> {
        if (1..=13).contains(&index) {
            Some(&self.segments[index - 1])
        } else {
            None
        }
    }

    pub fn total_mass_kg(&self) -> f64 {
        self.total_mass_kg
    }

    pub fn total_height_m(&self) -> f64 {
        self.total_height_m
    }

    fn mass(&self, index: usize) -> f64 {
        self.segments[index - 1].mass_kg.unwrap_or(0.0)
    }

    fn height(&self, index: usize) -> f64 {
        self.segments[index - 1].height_m
    }

    /// Applies a key=value override file on top of this table. Recognized
    /// keys: `segment.<i>.mass_kg`, `segment.<i>.com_height_m`,
    /// `total.mass_kg`, `total.height_m` (1-based segment indices).
    pub fn with_overrides(&self, path: &Path) -> Result<SegmentTable, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        self.with_override_str(&text, &path.display().to_string())
    }

    /// Same as [`SegmentTable::with_overrides`] for already-loaded text.
    pub fn with_override_str(&self, text: &str, file: &str) -> Result<SegmentTable, SimError> {
        let mut table = self.clone();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped
                .split_once('=')
                .ok_or_else(|| SimError::ConfigParse {
                    file: file.to_string(),
                    line,
                    msg: format!("expected `key = value`, got `{raw}`"),
                })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| SimError::ConfigParse {
                file: file.to_string(),
                line,
                msg: format!("`{}` is not a number", value.trim()),
            })?;
            table
                .apply_override(key, value)
                .map_err(|msg| SimError::ConfigParse {
                    file: file.to_string(),
                    line,
                    msg,
                })?;
        }
        Ok(table)
    }

    fn apply_override(&mut self, key: &str, value: f64) -> Result<(), String> {
        if !value.is_finite() || value <= 0.0 {
            return Err(format!("`{key}` must be a positive number"));
        }
        match key {
            "total.mass_kg" => {
                self.total_mass_kg = value;
                return Ok(());
            }
            "total.height_m" => {
                self.total_height_m = value;
                return Ok(());
            }
            _ => {}
        }
        let rest = key
            .strip_prefix("segment.")
            .ok_or_else(|| format!("unknown key `{key}`"))?;
        let (index, field) = rest
            .split_once('.')
            .ok_or_else(|| format!("unknown key `{key}`"))?;
        let index: usize = index
            .parse()
            .map_err(|_| format!("bad segment index in `{key}`"))?;
        if !(1..=13).contains(&index) {
            return Err(format!("segment index {index} out of range 1..13"));
        }
        match field {
            "mass_kg" => {
                if self.segments[index - 1].mass_kg.is_none() {
                    return Err(format!("segment {index} is a pivot entry and has no mass"));
                }
                self.segments[index - 1].mass_kg = Some(value);
            }
            "com_height_m" => self.segments[index - 1].height_m = value,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Non-fatal consistency checks. Overridden tables that break the
    /// reference bookkeeping are reported here, not rejected.
    pub fn consistency_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let modeled: f64 = (1..=11).map(|i| self.mass(i)).sum();
        if modeled > self.total_mass_kg + 1e-9 {
            warnings.push(format!(
                "modeled segment masses sum to {modeled} kg, above the total body mass {} kg",
                self.total_mass_kg
            ));
        }
        if self.height(12) <= self.height(13) {
            warnings.push(format!(
                "hip pivot height {} m is not above knee pivot height {} m",
                self.height(12),
                self.height(13)
            ));
        }
        warnings
    }
}

/// Subject-scaled lumped-mass model consumed by the torque estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanModel {
    /// Subject body mass (kg).
    pub subject_mass_kg: f64,
    /// Subject standing height (m).
    pub subject_height_m: f64,
    /// Combined mass of head, neck, thorax, abdomen, pelvis, arms, forearms
    /// and hands (kg).
    pub upper_body_mass_kg: f64,
    /// Mass of both thighs (kg).
    pub thigh_mass_kg: f64,
    /// Distance from the hip pivot to the upper-body center of mass (m).
    pub upper_body_com_lever_m: f64,
    /// Thigh length between hip and knee pivots (m).
    pub thigh_length_m: f64,
    /// Distance from the knee pivot to the thigh center of mass (m).
    pub thigh_com_lever_m: f64,
}

/// Scales the segment table to a subject of the given mass and height.
///
/// Masses scale with `mass / total_mass`, lengths with `height / total_height`.
/// The upper-body lever is the mass-weighted mean center-of-mass height of
/// segments 1-8 measured from the hip pivot.
pub fn build_human_model(
    mass_kg: f64,
    height_m: f64,
    table: &SegmentTable,
) -> Result<HumanModel, SimError> {
    if !mass_kg.is_finite() || mass_kg <= 0.0 {
        return Err(SimError::InvalidSubject(format!(
            "subject mass must be positive, got {mass_kg} kg"
        )));
    }
    if !height_m.is_finite() || height_m <= 0.0 {
        return Err(SimError::InvalidSubject(format!(
            "subject height must be positive, got {height_m} m"
        )));
    }

    let mass_ratio = mass_kg / table.total_mass_kg();
    let height_ratio = height_m / table.total_height_m();

    let upper_mass: f64 = (1..=8).map(|i| table.mass(i)).sum();
    let upper_moment: f64 = (1..=8).map(|i| table.mass(i) * table.height(i)).sum();

    let upper_body_mass_kg = mass_ratio * upper_mass;
    let thigh_mass_kg = mass_ratio * table.mass(9);
    let upper_body_com_lever_m = height_ratio * (upper_moment / upper_mass - table.height(12));
    let thigh_length_m = height_ratio * (table.height(12) - table.height(13));
    let thigh_com_lever_m = height_ratio * (table.height(9) - table.height(13));

    let model = HumanModel {
        subject_mass_kg: mass_kg,
        subject_height_m: height_m,
        upper_body_mass_kg,
        thigh_mass_kg,
        upper_body_com_lever_m,
        thigh_length_m,
        thigh_com_lever_m,
    };

    for (name, value) in [
        ("upper-body mass", model.upper_body_mass_kg),
        ("thigh mass", model.thigh_mass_kg),
        ("upper-body lever", model.upper_body_com_lever_m),
        ("thigh length", model.thigh_length_m),
        ("thigh CoM lever", model.thigh_com_lever_m),
    ] {
        if !value.is_finite() || value <= 0.0 {
            return Err(SimError::InvalidSubject(format!(
                "{name} came out non-positive ({value}); check the segment table"
            )));
        }
    }
    if model.thigh_com_lever_m >= model.thigh_length_m {
        return Err(SimError::InvalidSubject(format!(
            "thigh CoM lever {} m is not below thigh length {} m",
            model.thigh_com_lever_m, model.thigh_length_m
        )));
    }
    Ok(model)
}
