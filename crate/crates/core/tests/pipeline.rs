use std::fs;

use nalgebra::Vector3;
use smvio_core::harness::{evaluate, run_estimator, EstimatorKind, RunOptions};
use smvio_core::health::{evaluate_keyframe, HealthParams};
use smvio_core::io::{read_modes, read_streams, write_modes, write_streams, StreamFiles};
use smvio_core::pose_graph::g2o::{read_document, write_graph};
use smvio_core::pose_graph::KeyframeSource;
use smvio_core::sim::{simulate, FailureSchedule, Scenario};
use smvio_core::EstimatorMode;

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn stream_sets_are_deterministic_and_reload() {
    let scenario = Scenario::builtin("wreck_lawnmower").unwrap().with_seed(7);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_streams(&simulate(&scenario).unwrap(), a.path()).unwrap();
    write_streams(&simulate(&scenario).unwrap(), b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));

    let data = simulate(&scenario).unwrap();
    let back = read_streams(a.path()).unwrap();
    assert_eq!(back.scenario, data.scenario);
    assert_eq!(back.truth.len(), data.truth.len());
    assert_eq!(back.vio.len(), data.vio.len());
    assert_eq!(back.depth.len(), data.depth.len());
    assert_eq!(back.commands.len(), data.commands.len());
    for (x, y) in back.vio.iter().zip(&data.vio) {
        assert_eq!((x.tick, x.session, x.keyframe), (y.tick, y.session, y.keyframe));
        assert!((x.pose.position - y.pose.position).amax() < 1e-9);
    }
    // reloaded streams drive the estimator to the same answer
    let opts = RunOptions::default();
    let m1 = evaluate(&data, &run_estimator(&data, &opts).unwrap(), true).unwrap();
    let m2 = evaluate(&back, &run_estimator(&back, &opts).unwrap(), true).unwrap();
    assert_eq!(m1.n_switches, m2.n_switches);
    assert!((m1.rmse_ate_m - m2.rmse_ate_m).abs() < 1e-6);
}

#[test]
fn corrupted_stream_header_is_rejected() {
    let scenario = Scenario::builtin("reef_squares").unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_streams(&simulate(&scenario).unwrap(), dir.path()).unwrap();
    let path = dir.path().join(StreamFiles::VIO);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("# smvio vio v1", "# smvio vio v9", 1)).unwrap();
    assert!(read_streams(dir.path()).is_err());
}

#[test]
fn void_entry_turns_keyframes_unhealthy_within_one_period() {
    let scenario = Scenario::builtin("wreck_lawnmower").unwrap();
    let data = simulate(&scenario).unwrap();
    let entry = data
        .truth
        .iter()
        .find(|s| scenario.field.density_at(&s.pose.position) == 0.0)
        .unwrap()
        .t;
    let period = 1.0 / scenario.models.keyframe_rate;
    let first_bad = data
        .vio
        .iter()
        .filter_map(|f| f.keyframe.map(|k| (f.t, k)))
        .find(|(t, k)| *t >= entry && !evaluate_keyframe(k, &HealthParams::default()).unwrap().is_healthy())
        .unwrap()
        .0;
    assert!(first_bad - entry <= period + 1e-9, "entry {entry}, first unhealthy {first_bad}");
}

#[test]
fn pe_only_equals_command_integration_and_diverges_from_truth() {
    let scenario = Scenario::builtin("reef_squares").unwrap();
    let data = simulate(&scenario).unwrap();
    let out = run_estimator(&data, &RunOptions::for_estimator(EstimatorKind::PeOnly)).unwrap();
    assert!(out.samples.iter().all(|s| s.mode == EstimatorMode::PeTracking));

    // dead-reckon the command stream directly
    let mut p = data.truth.samples()[0].pose.position;
    let mut cmd = 0;
    let mut oracle = vec![p];
    for k in 1..data.truth.len() {
        let t_prev = data.truth.samples()[k - 1].t;
        while cmd + 1 < data.commands.len() && data.commands[cmd + 1].t <= t_prev + 1e-9 {
            cmd += 1;
        }
        let c = data.commands[cmd];
        p += data.imu[k - 1].orientation * Vector3::new(c.v_x, 0.0, c.v_z) * data.dt();
        oracle.push(p);
    }
    for s in &out.samples {
        let k = (s.t / data.dt()).round() as usize;
        let o = oracle[k];
        assert!((s.pose.position.xy() - o.xy()).norm() < 1e-9, "t = {}", s.t);
    }
    let m = evaluate(&data, &out, false).unwrap();
    assert!(m.rmse_ate_m > 0.5, "pe_only should drift: {}", m.rmse_ate_m);
}

#[test]
fn vio_only_survives_a_failure_window() {
    let scenario = Scenario::builtin("reef_lawnmower")
        .unwrap()
        .with_schedule(FailureSchedule::evenly("1x30", &[100.0], 30.0));
    let data = simulate(&scenario).unwrap();
    let out = run_estimator(&data, &RunOptions::for_estimator(EstimatorKind::VioOnly)).unwrap();
    assert!(out.switch_log.is_empty());
    assert_eq!(out.trajectory.last().unwrap().t, data.truth.last().unwrap().t);
    let err = |t: f64| smvio_core::harness::position_error_at(&out.trajectory, &data.truth, t).unwrap();
    assert!(err(130.0) > err(100.0) + 1.0);
}

#[test]
fn wreck_run_switches_out_and_back() {
    let data = simulate(&Scenario::builtin("wreck_lawnmower").unwrap()).unwrap();
    let out = run_estimator(&data, &RunOptions::default()).unwrap();
    assert!(out.switch_log.len() >= 2);
    assert_eq!(out.switch_log[0].to, EstimatorMode::PeTracking);
    assert_eq!(out.switch_log[1].to, EstimatorMode::VioTracking);

    let mut buf = Vec::new();
    write_modes(&out.mode_tags(), &mut buf).unwrap();
    let modes = read_modes(buf.as_slice()).unwrap();
    assert_eq!(modes.len(), out.samples.len());
    assert!(modes.iter().any(|(_, m)| m == "pe"));

    let graph = out.graph.unwrap();
    assert!(graph.nodes().iter().any(|n| n.source == KeyframeSource::PeKf));
    let mut g2o = Vec::new();
    write_graph(&graph, &mut g2o).unwrap();
    let doc = read_document(g2o.as_slice()).unwrap();
    assert_eq!(doc.vertices.len(), graph.nodes().len());
    assert_eq!(doc.edges.len(), graph.edges().len());
}

#[test]
fn shipped_scenario_files_match_builtins() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["reef_lawnmower", "wreck_lawnmower", "reef_squares"] {
        let loaded = Scenario::load(&root.join(format!("{name}.toml"))).unwrap();
        assert_eq!(loaded, Scenario::builtin(name).unwrap(), "{name}");
    }
}
