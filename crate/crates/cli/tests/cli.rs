use std::path::Path;
use std::process::Command;

use exosim_cli::{
    check_thresholds, metrics_json, preset_config, run_scenario, run_sweep, sweep_table, Args,
};
use exosim_core::config::ModeKind;
use exosim_core::SimConfig;

fn short(cfg: &mut SimConfig) {
    cfg.duration_s = Some(2.0);
    cfg.settle_skip_s = Some(0.5);
}

#[test]
fn presets_map_to_modes_and_gains() {
    let cfg = preset_config("unpowered").unwrap();
    assert_eq!(cfg.mode, ModeKind::PowerOff);
    let cfg = preset_config("zero-torque").unwrap();
    assert_eq!(cfg.mode, ModeKind::ZeroTorque);
    for (name, alpha) in [("assist-10", 0.1), ("assist-30", 0.3), ("assist-50", 0.5)] {
        let cfg = preset_config(name).unwrap();
        assert_eq!(cfg.mode, ModeKind::Assist);
        assert_eq!(cfg.alpha, alpha);
    }
    let cfg = preset_config("stoop-assist").unwrap();
    assert_eq!(
        cfg.trajectory.kind,
        exosim_core::motion::TrajectoryKind::Stoop
    );
    assert!(preset_config("warp-drive").is_err());
}

#[test]
fn empty_config_file_keeps_preset_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.txt");
    std::fs::write(&path, "").unwrap();
    let mut cfg = preset_config("assist-50").unwrap();
    cfg.apply_file(&path).unwrap();
    assert_eq!(cfg.alpha, 0.5);
    assert_eq!(cfg.mode, ModeKind::Assist);
}

#[test]
fn subject_one_config() {
    let mut cfg = preset_config("assist-50").unwrap();
    cfg.apply_str("subject.mass_kg = 70\nsubject.height_m = 1.70\n", "t")
        .unwrap();
    assert_eq!(cfg.subject_mass_kg, 70.0);
    assert_eq!(cfg.subject_height_m, 1.70);
    cfg.validate().unwrap();
}

#[test]
fn run_scenario_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("zero-torque").unwrap();
    short(&mut cfg);
    let out = run_scenario(&cfg, dir.path()).unwrap();
    assert!(out.fault.is_none());
    for suffix in ["trace.csv", "metrics.txt", "metrics.json", "config.txt"] {
        let p = dir.path().join(format!("zero-torque_{suffix}"));
        assert!(p.exists(), "{} missing", p.display());
    }
    let json: serde_json::Value = serde_json::from_str(&metrics_json(&out)).expect("valid json");
    assert!(json["metrics"]["rms_tracking_error_nm"].is_number());
    assert_eq!(json["ticks"]["plant_steps"], 400_000);

    let trace = std::fs::read_to_string(dir.path().join("zero-torque_trace.csv")).unwrap();
    assert!(trace.starts_with("# format = exosim-trace-1"));
    assert!(trace.contains("t_s,theta_b_rad"));
}

#[test]
fn emitted_config_reproduces_the_run_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("assist-30").unwrap();
    short(&mut cfg);
    cfg.imu.noise_std_rad = 0.0031;
    cfg.imu.seed = 77;
    cfg.seed = 77;
    run_scenario(&cfg, dir.path()).unwrap();

    let echoed = SimConfig::parse_file(&dir.path().join("assist-30_config.txt")).unwrap();
    assert_eq!(echoed, cfg);

    let dir2 = tempfile::tempdir().unwrap();
    run_scenario(&echoed, dir2.path()).unwrap();
    let a = std::fs::read(dir.path().join("assist-30_trace.csv")).unwrap();
    let b = std::fs::read(dir2.path().join("assist-30_trace.csv")).unwrap();
    assert_eq!(a, b, "echoed config must reproduce the trace byte for byte");
}

#[test]
fn sweep_over_empty_list_is_empty_success() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("zero-torque").unwrap();
    short(&mut cfg);
    let rows = run_sweep(&cfg, "plant.cable.friction_mu", &[], dir.path()).unwrap();
    assert!(rows.is_empty());
    let table = sweep_table("plant.cable.friction_mu", &rows);
    assert_eq!(table.lines().count(), 1, "header only");
}

#[test]
fn friction_sweep_raises_unpowered_resistance_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("unpowered").unwrap();
    cfg.trajectory.cycles = 1;
    cfg.settle_skip_s = Some(0.0);
    let values = ["0".to_string(), "0.05".to_string(), "0.1".to_string()];
    let rows = run_sweep(&cfg, "plant.cable.friction_mu", &values, dir.path()).unwrap();
    assert_eq!(rows.len(), 3);
    let peaks: Vec<f64> = rows
        .iter()
        .map(|r| r.metrics.as_ref().unwrap().peak_abs_interface_nm)
        .collect();
    assert!(
        peaks[0] < peaks[1] && peaks[1] < peaks[2],
        "peaks not monotone: {peaks:?}"
    );
}

#[test]
fn replay_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    // Record a coarse squat at 50 Hz and feed it back in as a replay.
    let mut csv = String::from("t_s,theta_b_deg,theta_t_deg,theta_s_deg\n");
    let traj = exosim_core::TrajectoryParams::squat();
    // 4 seconds at 50 Hz covers the 3 s run with margin.
    for k in 0..201 {
        let t = k as f64 * 0.02;
        let p = exosim_core::true_posture(&traj, t);
        csv.push_str(&format!(
            "{t},{},{},{}\n",
            p.trunk_rad.to_degrees(),
            p.thigh_rad.to_degrees(),
            p.shank_rad.to_degrees()
        ));
    }
    let replay_path = dir.path().join("recorded.csv");
    std::fs::write(&replay_path, csv).unwrap();

    let mut cfg = preset_config("zero-torque").unwrap();
    cfg.apply_str(
        &format!(
            "motion.replay_file = {}\nsim.duration_s = 3\nsim.settle_skip_s = 0.5\n",
            replay_path.display()
        ),
        "t",
    )
    .unwrap();
    let out = run_scenario(&cfg, dir.path()).unwrap();
    assert!(out.fault.is_none());
    // The replayed knee flexes: the logged knee angle must leave zero.
    let max_knee = out
        .log
        .rows
        .iter()
        .map(|r| r.knee_rad.abs())
        .fold(0.0f64, f64::max);
    assert!(
        max_knee > 0.3,
        "replayed motion reached only {max_knee} rad"
    );
}

#[test]
fn anthropometry_override_flows_through_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let override_path = dir.path().join("segments.txt");
    std::fs::write(&override_path, "segment.3.mass_kg = 40.0\n").unwrap();

    let mut cfg = preset_config("assist-50").unwrap();
    short(&mut cfg);
    cfg.apply_str(
        &format!(
            "anthropometry.override_file = {}\n",
            override_path.display()
        ),
        "t",
    )
    .unwrap();
    let heavier = run_scenario(&cfg, dir.path()).unwrap();
    assert!(
        !heavier.warnings.is_empty(),
        "overweight override should warn about the mass budget"
    );

    let mut base_cfg = preset_config("assist-50").unwrap();
    short(&mut base_cfg);
    let base = run_scenario(&base_cfg, tempfile::tempdir().unwrap().path()).unwrap();

    let peak = |out: &exosim_core::RunOutput| {
        out.log
            .rows
            .iter()
            .map(|r| r.biological_nm.abs())
            .fold(0.0f64, f64::max)
    };
    assert!(
        peak(&heavier) > peak(&base),
        "a heavier thorax must raise the torque estimate"
    );
}

#[test]
fn threshold_bands() {
    let mut cfg = preset_config("assist-50").unwrap();
    cfg.trajectory.cycles = 2;
    let out = run_scenario(&cfg, tempfile::tempdir().unwrap().path()).unwrap();
    let m = out.metrics.unwrap();
    assert!(check_thresholds("assist-50", &m).is_empty());

    // A deliberately out-of-band metric fails the check.
    let mut bad = m.clone();
    bad.rms_error_pct_of_peak = Some(10.0);
    assert!(!check_thresholds("assist-50", &bad).is_empty());
    bad.rms_error_pct_of_peak = None;
    assert!(!check_thresholds("assist-50", &bad).is_empty());

    let mut bad_peak = m.clone();
    bad_peak.peak_abs_interface_nm = 10.0;
    assert!(!check_thresholds("unpowered", &bad_peak).is_empty());
    assert!(check_thresholds("stoop-assist", &m).is_empty());
}

fn exosim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exosim"))
}

#[test]
fn binary_runs_a_scenario_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("short.txt");
    std::fs::write(&cfg_path, "sim.duration_s = 2\nsim.settle_skip_s = 0.5\n").unwrap();
    let status = exosim()
        .args([
            "--scenario",
            "zero-torque",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .expect("binary runs");
    assert!(status.success());
    assert!(dir.path().join("zero-torque_trace.csv").exists());
}

#[test]
fn binary_rejects_bad_config_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.txt");
    std::fs::write(&cfg_path, "control.alpha = 1.5\n").unwrap();
    let status = exosim()
        .args([
            "--scenario",
            "assist-50",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = exosim()
        .args(["--scenario", "warp-drive"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_honors_out_dir_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("short.txt");
    std::fs::write(&cfg_path, "sim.duration_s = 1\nsim.settle_skip_s = 0\n").unwrap();
    let status = exosim()
        .env("EXOSIM_OUT_DIR", dir.path())
        .args([
            "--scenario",
            "unpowered",
            "--config",
            cfg_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("unpowered_trace.csv").exists());
}

#[test]
fn binary_sweep_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("short.txt");
    std::fs::write(&cfg_path, "sim.duration_s = 2\nsim.settle_skip_s = 0\n").unwrap();
    let output = exosim()
        .args([
            "--scenario",
            "zero-torque",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--sweep",
            "plant.cable.friction_mu=0,0.05",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("plant.cable.friction_mu"));
    assert_eq!(stdout.lines().count(), 3, "header plus two rows: {stdout}");
    assert!(Path::new(dir.path())
        .join("zero-torque_plant.cable.friction_mu=0.05_trace.csv")
        .exists());
}

#[test]
fn cli_args_parse() {
    use clap::Parser;
    let args = Args::parse_from([
        "exosim",
        "--scenario",
        "assist-10",
        "--cycles",
        "3",
        "--seed",
        "9",
        "--check-thresholds",
    ]);
    assert_eq!(args.scenario, "assist-10");
    assert_eq!(args.cycles, Some(3));
    assert_eq!(args.seed, Some(9));
    assert!(args.check_thresholds);
}

#[test]
fn gain_sweep_emits_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("assist-50").unwrap();
    short(&mut cfg);
    let values = ["0.1".to_string(), "0.3".to_string(), "0.5".to_string()];
    let rows = run_sweep(&cfg, "control.alpha", &values, dir.path()).unwrap();
    assert_eq!(rows.len(), 3);
    // Higher assistance levels deliver proportionally more torque.
    let peaks: Vec<f64> = rows
        .iter()
        .map(|r| r.metrics.as_ref().unwrap().peak_reference_nm)
        .collect();
    assert!(peaks[0] < peaks[1] && peaks[1] < peaks[2]);
    let table = sweep_table("control.alpha", &rows);
    assert_eq!(table.lines().count(), 4);
}
