//! End-to-end pipeline behavior over synthetic scenes.

mod common;

use common::{clutter, polar, sector_scene, sensor_with_state};
use leafscope::geom::Vec3;
use leafscope::pipeline::{self, PipelineConfig, SkipReason};
use leafscope::scene;
use leafscope::spectral::StateCoding;

#[test]
fn boresight_sensor_yields_one_full_record() {
    let mut scene = sector_scene(40.0, 11);
    scene.sensors.push(sensor_with_state(Vec3::new(1.5, 0.0, 0.0), 0.7, &StateCoding::default()));
    let cfg = PipelineConfig::from_scene(scene).unwrap();
    let records = pipeline::run_pipeline(&cfg);

    assert_eq!(records.len(), 1);
    let record = &records[0];
    let full = record.interrogation().expect("in-gate boresight sensor must be interrogated");
    assert!(record.centroid.distance(Vec3::new(1.5, 0.0, 0.0)) < 0.02);
    assert!(full.defocus_error_d <= 1e-12, "defocus {}", full.defocus_error_d);
    assert!((full.state_score - 0.7).abs() < 0.02, "score {}", full.state_score);
    assert!(full.in_envelope);
}

#[test]
fn sensor_beyond_the_range_gate_is_never_detected() {
    let mut scene = sector_scene(40.0, 12);
    scene.sensors.push(sensor_with_state(Vec3::new(3.0, 0.0, 0.0), 0.5, &StateCoding::default()));
    let cfg = PipelineConfig::from_scene(scene).unwrap();
    assert!(pipeline::run_pipeline(&cfg).is_empty());
}

#[test]
fn wide_target_is_skipped_out_of_envelope() {
    let mut scene = sector_scene(60.0, 13);
    // 50 degrees off the default reflected beam, inside the detector's gate.
    let mirror = scene.rig.mirror_position;
    let off = 50.0_f64.to_radians();
    let position = mirror + Vec3::new(off.cos(), off.sin(), 0.0) * 1.5;
    scene.sensors.push(sensor_with_state(position, 0.5, &StateCoding::default()));
    let cfg = PipelineConfig::from_scene(scene).unwrap();
    let records = pipeline::run_pipeline(&cfg);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].skip_reason(), Some(SkipReason::OutOfEnvelope));
}

#[test]
fn out_of_gate_clutter_cluster_is_skipped_with_reason() {
    let mut scene = sector_scene(55.0, 14);
    scene.sensors.push(sensor_with_state(Vec3::new(1.4, 0.0, 0.0), 0.6, &StateCoding::default()));
    // Dense glass at 2.6 m: clusters in the retro band but outside the gate.
    scene.clutter.push(clutter(polar(2.6, 30.0, 0.0), 0.4, 1.0));
    let cfg = PipelineConfig::from_scene(scene).unwrap();
    let records = pipeline::run_pipeline(&cfg);

    assert!(records.iter().any(|r| r.interrogation().is_some()));
    assert!(records
        .iter()
        .any(|r| r.skip_reason() == Some(SkipReason::OutOfRangeGate) && r.mean_range_m > 2.05));
}

#[test]
fn records_conserve_detected_clusters() {
    let mut scene = sector_scene(55.0, 15);
    for (i, az) in [-20.0, 0.0, 20.0].iter().enumerate() {
        scene.sensors.push(sensor_with_state(polar(1.2 + 0.3 * i as f64, *az, 0.0), 0.5, &StateCoding::default()));
    }
    scene.clutter.push(clutter(polar(2.4, 35.0, 0.0), 0.5, 1.0));
    let cfg = PipelineConfig::from_scene(scene.clone()).unwrap();

    let frame = scene::render_frame(&scene, cfg.seed);
    let clusters = leafscope::isolate::detect(&frame, &cfg.isolation);
    let records = pipeline::run_pipeline(&cfg);

    assert_eq!(records.len(), clusters.len(), "one record per detected cluster");
    let full = records.iter().filter(|r| r.interrogation().is_some()).count();
    let skipped = records.iter().filter(|r| r.skip_reason().is_some()).count();
    assert_eq!(full + skipped, clusters.len());
    // Records are ordered by target id.
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.target_id, i);
    }
}

#[test]
fn focus_power_is_consistent_with_reported_mean_range() {
    let mut scene = sector_scene(40.0, 16);
    scene.sensors.push(sensor_with_state(Vec3::new(1.1, 0.2, 0.0), 0.4, &StateCoding::default()));
    let cfg = PipelineConfig::from_scene(scene).unwrap();
    for record in pipeline::run_pipeline(&cfg) {
        if let Some(full) = record.interrogation() {
            let expected = leafscope::focus::required_power(&cfg.focus_calibration, record.mean_range_m).unwrap();
            assert_eq!(full.focus_power_d, expected);
        }
    }
}

#[test]
fn folded_path_mode_focuses_the_camera_leg_too() {
    let mut scene = sector_scene(40.0, 21);
    scene.sensors.push(sensor_with_state(Vec3::new(1.5, 0.0, 0.0), 0.5, &StateCoding::default()));
    let mut cfg = PipelineConfig::from_scene(scene).unwrap();
    cfg.distance_source = pipeline::DistanceSource::FoldedPath;
    let records = pipeline::run_pipeline(&cfg);
    let full = records[0].interrogation().unwrap();
    let folded = leafscope::steer::focus_path_length(&cfg.scene.rig, records[0].centroid);
    assert!(folded > records[0].mean_range_m, "the folded path includes the camera-mirror leg");
    let expected = leafscope::focus::required_power(&cfg.focus_calibration, folded).unwrap();
    assert_eq!(full.focus_power_d, expected);
}

#[test]
fn identical_config_and_seed_reproduce_identical_records() {
    let mut scene = sector_scene(55.0, 17);
    scene.sensors.push(sensor_with_state(Vec3::new(1.5, -0.3, 0.05), 0.8, &StateCoding::default()));
    scene.clutter.push(clutter(polar(2.3, 25.0, 0.0), 0.8, 0.6));
    let mut cfg = PipelineConfig::from_scene(scene).unwrap();
    cfg.noise_sd = 0.01;

    let a = pipeline::run_pipeline(&cfg);
    let b = pipeline::run_pipeline(&cfg);
    assert_eq!(a, b);
    assert_eq!(pipeline::report_to_string(&a), pipeline::report_to_string(&b));

    let mut other = cfg.clone();
    other.seed = cfg.seed + 1;
    let c = pipeline::run_pipeline(&other);
    assert_ne!(pipeline::report_to_string(&a), pipeline::report_to_string(&c));
}

#[test]
fn config_file_round_trip_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = sector_scene(40.0, 18);
    sc.sensors.push(sensor_with_state(Vec3::new(1.5, 0.0, 0.0), 0.7, &StateCoding::default()));
    scene::save_scene(&sc, dir.path().join("scene.toml")).unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
            scene = "scene.toml"
            output = "report.csv"
            seed = 18

            [isolation]
            band = { lo = 230.0, hi = 255.0 }

            [spectral]
            noise_sd = 0.0
        "#,
    )
    .unwrap();

    let cfg = PipelineConfig::load(dir.path().join("run.toml")).unwrap();
    assert_eq!(cfg.seed, 18);
    let records = pipeline::run_pipeline(&cfg);
    assert_eq!(records.len(), 1);
    let out = cfg.output.as_ref().unwrap();
    pipeline::write_report(&records, out).unwrap();
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with(pipeline::REPORT_HEADER));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "scene = \"missing.toml\"\n").unwrap();
    assert!(PipelineConfig::load(dir.path().join("run.toml")).is_err());

    let mut sc = sector_scene(40.0, 19);
    sc.sensors.push(sensor_with_state(Vec3::new(1.5, 0.0, 0.0), 0.7, &StateCoding::default()));
    scene::save_scene(&sc, dir.path().join("scene.toml")).unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "scene = \"scene.toml\"\n[spectral]\nexposure = 0.0\n",
    )
    .unwrap();
    let err = PipelineConfig::load(dir.path().join("bad.toml")).unwrap_err();
    assert!(err.to_string().contains("exposure"), "got: {err}");
}
