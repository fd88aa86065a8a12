use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use smvio_core::health::{evaluate_keyframe, HealthParams, KeyframeStats};
use smvio_core::primitive::{ImuSample, PeConfig, PeState, VelocityCommand};
use smvio_core::sim::{simulate, Scenario};
use smvio_core::{run_estimator, EstimatorKind, Pose, RunOptions};

fn pe_step(c: &mut Criterion) {
    let state = PeState::new(Pose::identity(), 0.0);
    let imu = ImuSample {
        t: 0.0,
        orientation: nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, 0.7),
    };
    let cmd = VelocityCommand::new(0.0, 0.3, -0.05);
    let config = PeConfig::default();
    c.bench_function("pe_step", |b| {
        b.iter(|| black_box(&state).step(black_box(&imu), &cmd, 0.01, &config).unwrap())
    });
}

fn keyframe_health(c: &mut Criterion) {
    let params = HealthParams::default();
    let kf = KeyframeStats {
        t: 1.0,
        tracked_3d_kps: 80,
        total_detections: 200,
        detections_per_quadrant: [60, 50, 45, 45],
        new_kps: 30,
        total_kps: 150,
        weak_response_kps: 20,
    };
    c.bench_function("evaluate_keyframe", |b| {
        b.iter(|| evaluate_keyframe(black_box(&kf), &params).unwrap())
    });
}

fn full_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_estimator");
    group.sample_size(10);
    for name in ["reef_lawnmower", "wreck_lawnmower"] {
        let data = simulate(&Scenario::builtin(name).unwrap()).unwrap();
        for kind in EstimatorKind::ALL {
            let opts = RunOptions::for_estimator(kind);
            group.bench_function(format!("{name}/{kind}"), |b| {
                b.iter(|| run_estimator(&data, &opts).unwrap())
            });
        }
    }
    let data = simulate(&Scenario::builtin("reef_squares").unwrap()).unwrap();
    let opts = RunOptions::default().with_loop_closure(true);
    group.bench_function("reef_squares/sm_vio+loops", |b| {
        b.iter(|| run_estimator(&data, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, pe_step, keyframe_health, full_runs);
criterion_main!(benches);
