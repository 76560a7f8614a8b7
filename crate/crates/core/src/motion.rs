//! Prescribed lifting trajectories, replayed posture files, and the
//! three-IMU sensing pipeline with startup calibration.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::biomechanics::Posture;
use crate::error::SimError;

/// Identifier of the noise generator, recorded in log headers so runs are
/// reproducible across implementations.
pub const RNG_ALGORITHM: &str = "chacha12";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Squat,
    Stoop,
}

impl TrajectoryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryKind::Squat => "squat",
            TrajectoryKind::Stoop => "stoop",
        }
    }

    pub fn parse(s: &str) -> Option<TrajectoryKind> {
        match s {
            "squat" => Some(TrajectoryKind::Squat),
            "stoop" => Some(TrajectoryKind::Stoop),
            _ => None,
        }
    }
}

/// Parameters of the prescribed lifting motion.
///
/// Knee flexion follows a raised cosine from zero to the peak and back over
/// each cycle. The flexion splits between thigh and shank by `shank_share`;
/// trunk lean follows the same normalized profile up to `peak_trunk_lean`.
/// Trunk lean carries the opposite sign of the thigh rotation: leaning the
/// trunk forward shifts weight over the knee and lowers the knee moment,
/// which is what makes squat and stoop differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    pub kind: TrajectoryKind,
    pub cycle_period_s: f64,
    pub cycles: u32,
    pub peak_knee_flexion_rad: f64,
    pub peak_trunk_lean_rad: f64,
    /// Fraction of knee flexion taken by the shank segment, 0..=1.
    pub shank_share: f64,
}

/// Upper bound on the commanded knee flexion (the mechanism's range of
/// motion is 0-130 degrees).
pub const MAX_KNEE_FLEXION_RAD: f64 = 130.0 * std::f64::consts::PI / 180.0;

impl TrajectoryParams {
    pub fn squat() -> Self {
        TrajectoryParams {
            kind: TrajectoryKind::Squat,
            cycle_period_s: 8.0,
            cycles: 5,
            peak_knee_flexion_rad: MAX_KNEE_FLEXION_RAD,
            peak_trunk_lean_rad: 40f64.to_radians(),
            shank_share: 0.35,
        }
    }

    pub fn stoop() -> Self {
        TrajectoryParams {
            kind: TrajectoryKind::Stoop,
            cycle_period_s: 8.0,
            cycles: 5,
            peak_knee_flexion_rad: 25f64.to_radians(),
            peak_trunk_lean_rad: 80f64.to_radians(),
            shank_share: 0.35,
        }
    }

    pub fn defaults_for(kind: TrajectoryKind) -> Self {
        match kind {
            TrajectoryKind::Squat => Self::squat(),
            TrajectoryKind::Stoop => Self::stoop(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.cycle_period_s * f64::from(self.cycles)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.cycle_period_s.is_finite() && self.cycle_period_s > 0.0) {
            return Err(SimError::Config(format!(
                "trajectory cycle period must be positive, got {}",
                self.cycle_period_s
            )));
        }
        if self.cycles < 1 {
            return Err(SimError::Config(
                "trajectory needs at least one cycle".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.shank_share) {
            return Err(SimError::Config(format!(
                "shank share must lie in [0, 1], got {}",
                self.shank_share
            )));
        }
        if !(0.0..=MAX_KNEE_FLEXION_RAD + 1e-12).contains(&self.peak_knee_flexion_rad) {
            return Err(SimError::Config(format!(
                "peak knee flexion must lie in [0, 130 deg], got {} rad",
                self.peak_knee_flexion_rad
            )));
        }
        if !self.peak_trunk_lean_rad.is_finite()
            || self.peak_trunk_lean_rad.abs() > std::f64::consts::FRAC_PI_2
        {
            return Err(SimError::Config(format!(
                "peak trunk lean must lie in [-90, 90] deg, got {} rad",
                self.peak_trunk_lean_rad
            )));
        }
        Ok(())
    }

    /// Normalized 0..1 raised-cosine cycle profile.
    fn profile(&self, t_s: f64) -> f64 {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * t_s / self.cycle_period_s).cos())
    }

    fn profile_rate(&self, t_s: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.cycle_period_s;
        0.5 * w * (w * t_s).sin()
    }
}

/// The true (noise-free) posture at time `t` seconds into the motion.
/// Periodic; every multiple of the cycle period is upright stance.
pub fn true_posture(params: &TrajectoryParams, t_s: f64) -> Posture {
    let phi = params.profile(t_s);
    let flexion = params.peak_knee_flexion_rad * phi;
    Posture {
        trunk_rad: params.peak_trunk_lean_rad * phi,
        thigh_rad: -(1.0 - params.shank_share) * flexion,
        shank_rad: params.shank_share * flexion,
    }
}

/// Time derivatives of (trunk, thigh, shank) at time `t`.
pub fn posture_rates(params: &TrajectoryParams, t_s: f64) -> [f64; 3] {
    let dphi = params.profile_rate(t_s);
    let dflex = params.peak_knee_flexion_rad * dphi;
    [
        params.peak_trunk_lean_rad * dphi,
        -(1.0 - params.shank_share) * dflex,
        params.shank_share * dflex,
    ]
}

/// IMU sampling and calibration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuConfig {
    pub sample_rate_hz: f64,
    pub noise_std_rad: f64,
    /// Standing-still interval used to estimate per-axis offsets.
    pub calibration_window_s: f64,
    pub seed: u64,
    /// Constant mounting offset added to (trunk, thigh, shank); calibration
    /// is what removes it.
    pub mount_bias_rad: [f64; 3],
}

impl Default for ImuConfig {
    fn default() -> Self {
        ImuConfig {
            sample_rate_hz: 400.0,
            noise_std_rad: 0.0,
            calibration_window_s: 0.5,
            seed: 0,
            mount_bias_rad: [0.0; 3],
        }
    }
}

impl ImuConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(SimError::Config(format!(
                "IMU sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.noise_std_rad.is_finite() && self.noise_std_rad >= 0.0) {
            return Err(SimError::Config(format!(
                "IMU noise std must be non-negative, got {}",
                self.noise_std_rad
            )));
        }
        if !(self.calibration_window_s.is_finite() && self.calibration_window_s >= 0.0) {
            return Err(SimError::Config(format!(
                "IMU calibration window must be non-negative, got {}",
                self.calibration_window_s
            )));
        }
        Ok(())
    }
}

/// Posture source driving a run: a generated trajectory or a replayed file.
#[derive(Debug, Clone)]
pub enum MotionSource {
    Prescribed(TrajectoryParams),
    Replay(ReplayTrajectory),
}

impl MotionSource {
    pub fn posture(&self, t_s: f64) -> Posture {
        match self {
            MotionSource::Prescribed(p) => true_posture(p, t_s),
            MotionSource::Replay(r) => r.posture(t_s),
        }
    }

    /// Knee angle and angular velocity (extension positive) at time `t`.
    pub fn knee_state(&self, t_s: f64) -> (f64, f64) {
        match self {
            MotionSource::Prescribed(p) => {
                let phi = p.profile(t_s);
                let dphi = p.profile_rate(t_s);
                (
                    -p.peak_knee_flexion_rad * phi,
                    -p.peak_knee_flexion_rad * dphi,
                )
            }
            MotionSource::Replay(r) => r.knee_state(t_s),
        }
    }
}

/// Calibrated, uniformly sampled posture measurements. Sample `m` is taken
/// at `m / sample_rate` seconds; timestamps restart at zero after the
/// calibration window.
#[derive(Debug, Clone)]
pub struct ImuStream {
    samples: Vec<Posture>,
    period_s: f64,
}

impl ImuStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    pub fn sample(&self, index: usize) -> &Posture {
        &self.samples[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Posture)> {
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, p)| (i as f64 * self.period_s, p))
    }
}

/// Simulates the IMU pipeline: samples the source at the configured rate,
/// adds seeded zero-mean Gaussian noise and the mounting bias, and subtracts
/// per-axis offsets estimated while the subject stands straight during the
/// calibration window. Emits `duration * rate` samples starting at t = 0.
pub fn imu_stream(
    source: &MotionSource,
    cfg: &ImuConfig,
    duration_s: f64,
) -> Result<ImuStream, SimError> {
    cfg.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SimError::Config(format!(
            "IMU stream duration must be positive, got {duration_s}"
        )));
    }
    if duration_s < cfg.calibration_window_s {
        return Err(SimError::Config(format!(
            "duration {duration_s} s is shorter than the calibration window {} s",
            cfg.calibration_window_s
        )));
    }

    let period = 1.0 / cfg.sample_rate_hz;
    let n_window = (cfg.calibration_window_s * cfg.sample_rate_hz + 1e-9).floor() as usize;
    let n_emit = (duration_s * cfg.sample_rate_hz + 1e-9).floor() as usize;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std_rad)
        .map_err(|e| SimError::Config(format!("bad IMU noise std: {e}")))?;
    let draw = |rng: &mut ChaCha12Rng| {
        if cfg.noise_std_rad > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        }
    };

    // Standing straight before the motion starts: the true angles are zero,
    // so the window average captures bias plus mean noise.
    let mut offsets = [0.0f64; 3];
    for _ in 0..n_window {
        for (axis, offset) in offsets.iter_mut().enumerate() {
            *offset += cfg.mount_bias_rad[axis] + draw(&mut rng);
        }
    }
    if n_window > 0 {
        for offset in &mut offsets {
            *offset /= n_window as f64;
        }
    }

    let mut samples = Vec::with_capacity(n_emit);
    for m in 0..n_emit {
        let truth = source.posture(m as f64 * period);
        let raw = [
            truth.trunk_rad + cfg.mount_bias_rad[0] + draw(&mut rng),
            truth.thigh_rad + cfg.mount_bias_rad[1] + draw(&mut rng),
            truth.shank_rad + cfg.mount_bias_rad[2] + draw(&mut rng),
        ];
        samples.push(Posture::new(
            raw[0] - offsets[0],
            raw[1] - offsets[1],
            raw[2] - offsets[2],
        )?);
    }

    Ok(ImuStream {
        samples,
        period_s: period,
    })
}

/// Recorded postures loaded from a comma-separated file with header
/// `t_s,theta_b_deg,theta_t_deg,theta_s_deg`. Angles are degrees in the file
/// and radians in memory; lookups interpolate linearly and hold the ends.
#[derive(Debug, Clone)]
pub struct ReplayTrajectory {
    times_s: Vec<f64>,
    postures: Vec<[f64; 3]>,
}

pub const REPLAY_HEADER: &str = "t_s,theta_b_deg,theta_t_deg,theta_s_deg";

impl ReplayTrajectory {
    pub fn load(path: &Path) -> Result<ReplayTrajectory, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, file: &str) -> Result<ReplayTrajectory, SimError> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() || l.starts_with('#') => continue,
                Some((n, l)) => break (n, l),
                None => {
                    return Err(SimError::Config(format!("{file}: empty replay file")));
                }
            }
        };
        if header.1.trim() != REPLAY_HEADER {
            return Err(SimError::ConfigParse {
                file: file.to_string(),
                line: header.0 + 1,
                msg: format!("expected header `{REPLAY_HEADER}`"),
            });
        }

        let mut times_s = Vec::new();
        let mut postures = Vec::new();
        for (n, raw) in lines {
            let line = n + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(SimError::ConfigParse {
                    file: file.to_string(),
                    line,
                    msg: format!("expected 4 comma-separated fields, got {}", fields.len()),
                });
            }
            let mut values = [0.0f64; 4];
            for (i, f) in fields.iter().enumerate() {
                values[i] = f.parse().map_err(|_| SimError::ConfigParse {
                    file: file.to_string(),
                    line,
                    msg: format!("`{f}` is not a number"),
                })?;
            }
            if let Some(&last) = times_s.last() {
                if values[0] <= last {
                    return Err(SimError::ConfigParse {
                        file: file.to_string(),
                        line,
                        msg: format!("timestamps must increase, got {} after {last}", values[0]),
                    });
                }
            }
            times_s.push(values[0]);
            postures.push([
                values[1].to_radians(),
                values[2].to_radians(),
                values[3].to_radians(),
            ]);
        }
        if times_s.is_empty() {
            return Err(SimError::Config(format!(
                "{file}: replay file has no samples"
            )));
        }
        Ok(ReplayTrajectory { times_s, postures })
    }

    pub fn duration_s(&self) -> f64 {
        *self.times_s.last().unwrap()
    }

    fn interpolate(&self, t_s: f64) -> ([f64; 3], [f64; 3]) {
        let n = self.times_s.len();
        if t_s <= self.times_s[0] || n == 1 {
            return (self.postures[0], [0.0; 3]);
        }
        if t_s >= self.times_s[n - 1] {
            return (self.postures[n - 1], [0.0; 3]);
        }
        let hi = self.times_s.partition_point(|&x| x <= t_s).min(n - 1);
        let lo = hi - 1;
        let span = self.times_s[hi] - self.times_s[lo];
        let frac = (t_s - self.times_s[lo]) / span;
        let mut value = [0.0f64; 3];
        let mut rate = [0.0f64; 3];
        for axis in 0..3 {
            let a = self.postures[lo][axis];
            let b = self.postures[hi][axis];
            value[axis] = a + frac * (b - a);
            rate[axis] = (b - a) / span;
        }
        (value, rate)
    }

    pub fn posture(&self, t_s: f64) -> Posture {
        let (v, _) = self.interpolate(t_s);
        Posture {
            trunk_rad: v[0],
            thigh_rad: v[1],
            shank_rad: v[2],
        }
    }

    pub fn knee_state(&self, t_s: f64) -> (f64, f64) {
        let (v, r) = self.interpolate(t_s);
        (v[1] - v[2], r[1] - r[2])
    }
}
