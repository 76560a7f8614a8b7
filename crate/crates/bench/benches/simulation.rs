use criterion::{black_box, criterion_group, criterion_main, Criterion};

use exosim_bench::one_second_config;
use exosim_core::anthropometry::{build_human_model, reference_segments};
use exosim_core::biomechanics::{biological_knee_torque, Posture};
use exosim_core::engine::run;
use exosim_core::plant::{DriveCommand, Plant, PlantParams, PlantState};

fn bench_torque_estimate(c: &mut Criterion) {
    let model = build_human_model(81.4, 1.784, &reference_segments()).unwrap();
    let posture = Posture::new(0.4, -1.1, 0.6).unwrap();
    c.bench_function("biological_knee_torque", |b| {
        b.iter(|| biological_knee_torque(black_box(&model), black_box(&posture)))
    });
}

fn bench_plant_step(c: &mut Criterion) {
    let plant = Plant::new(PlantParams::default()).unwrap();
    let mut state = PlantState::at_rest();
    state.motor_angle_rad = 0.9;
    let cmd = DriveCommand {
        voltage_v: 3.0,
        enabled: true,
    };
    c.bench_function("plant_step", |b| {
        b.iter(|| {
            let next = plant
                .step(black_box(&state), cmd, -0.4, -0.5, 5e-6, 0.0)
                .unwrap();
            black_box(next)
        })
    });
}

fn bench_one_second_run(c: &mut Criterion) {
    let cfg = one_second_config();
    let mut group = c.benchmark_group("engine");
    group.sample_size(10);
    group.bench_function("one_second_zero_torque_run", |b| {
        b.iter(|| run(black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_torque_estimate,
    bench_plant_step,
    bench_one_second_run
);
criterion_main!(benches);
