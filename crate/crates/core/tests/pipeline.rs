use snn_track::events::{load_events, synthesize_events, write_events_binary, OrderingPolicy, SensorGeometry, SyntheticSceneConfig};
use snn_track::harness::Config;
use snn_track::hough::{CpuHoughEstimator, SnnHoughEstimator};

fn wrap(d: f64) -> f64 {
    (d + 90.0).rem_euclid(180.0) - 90.0
}

/// Absolute errors against the scene angle, one per ms: (snn, cpu).
fn errors(scene: &SyntheticSceneConfig, events: &[snn_track::events::DvsEvent], ms: u64) -> (Vec<f64>, Vec<f64>) {
    let cfg = Config::default();
    let mut snn = SnnHoughEstimator::<f64>::new(cfg.grid.clone(), &cfg.snn_hough, cfg.engine).unwrap();
    let mut cpu = CpuHoughEstimator::new(cfg.grid.clone(), cfg.cpu_hough.clone());
    let (mut es, mut ec) = (Vec::new(), Vec::new());
    let mut i = 0;
    for k in 0..ms * 20 {
        let t = (k + 1) * 50;
        let j = i + events[i..].partition_point(|e| e.t <= t);
        let s = snn.step(&events[i..j]).unwrap();
        cpu.push(&events[i..j]).unwrap();
        i = j;
        if t % 1000 == 0 && t > 10_000 {
            let truth = scene.trajectory.angle_at(t as f64);
            es.push(wrap(s.theta.unwrap() - truth).abs());
            ec.push(wrap(cpu.estimate(t).theta.unwrap() - truth).abs());
        }
    }
    (es, ec)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn estimators_follow_a_fast_rotation() {
    let scene = SyntheticSceneConfig::rotating(1200.0);
    let events = synthesize_events(&scene, 300_000);
    let (snn, cpu) = errors(&scene, &events, 300);
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    // Both lag the scene by about a millisecond (1.2 deg) plus bin quantisation.
    assert!(mean(&cpu) < 3.0 && max(&cpu) < 6.0, "cpu {} / {}", mean(&cpu), max(&cpu));
    assert!(mean(&snn) < 3.0 && max(&snn) < 15.0, "snn {} / {}", mean(&snn), max(&snn));
}

#[test]
fn file_round_trip_gives_the_same_estimates() {
    let scene = SyntheticSceneConfig::rotating(800.0);
    let events = synthesize_events(&scene, 50_000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.bin");
    write_events_binary(std::fs::File::create(&path).unwrap(), &events).unwrap();
    let loaded = load_events(&path, SensorGeometry::default(), OrderingPolicy::Reject).unwrap();
    assert_eq!(loaded, events);
    assert_eq!(errors(&scene, &events, 50), errors(&scene, &loaded, 50));
}
