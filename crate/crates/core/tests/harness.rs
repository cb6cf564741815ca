use std::sync::Arc;

use drive_robust::harness::{
    load_sweep, run_route, run_sweep, EvalConfig, RunRecord, Setting, SweepSpec,
};
use drive_robust::metrics::driving_score;
use drive_robust::perturb::PerturbationSpec;
use drive_robust::world::{RouteSpec, RouteSuite};

fn route(id: &str) -> Arc<RouteSpec> {
    Arc::new(RouteSuite::bundled().get(id).unwrap().clone())
}

#[test]
fn deadreckon_ignores_gps_noise_entirely() {
    let cfg = EvalConfig::default();
    let r = route("curve_02");
    let clean = run_route("deadreckon", &r, &Setting::baseline(), &cfg).unwrap();
    let noisy = run_route(
        "deadreckon",
        &r,
        &Setting::perturbation(PerturbationSpec::gps(15.0)),
        &cfg,
    )
    .unwrap();
    assert_eq!(clean.ticks.len(), noisy.ticks.len());
    for (a, b) in clean.ticks.iter().zip(&noisy.ticks) {
        assert_eq!(a.applied, b.applied, "tick {}", a.tick);
        assert_ne!(a.clean, b.perturbed);
    }
    assert_eq!(clean.result, noisy.result);
}

#[test]
fn identity_setting_leaves_observations_untouched() {
    let cfg = EvalConfig::default();
    let rec = run_route(
        "full-pursuit",
        &route("signal_turn_01"),
        &Setting::baseline(),
        &cfg,
    )
    .unwrap();
    assert!(rec
        .ticks
        .iter()
        .all(|t| t.clean == t.perturbed && t.fresh == t.applied));
    assert!(rec.ticks.iter().all(|t| t.perturbation.is_empty()));
}

#[test]
fn long_latency_hurts_on_a_lead_vehicle_stop() {
    let cfg = EvalConfig::default();
    let r = route("lead_stop_01");
    let clean = run_route("full-pursuit", &r, &Setting::baseline(), &cfg).unwrap();
    let late = run_route("full-pursuit", &r, &Setting::latency_ms(500.0), &cfg).unwrap();
    let ds = |rec: &RunRecord| driving_score(&rec.result, &cfg.penalties);
    assert!(ds(&late) < ds(&clean), "{} vs {}", ds(&late), ds(&clean));
    assert!(late.ticks[..10].iter().all(|t| t.applied.brake == 1.0));
}

#[test]
fn records_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = EvalConfig::default();
    let setting = Setting::parse("occlusion:0.5+latency:100").unwrap();
    let rec = run_route("blind-follower", &route("straight_01"), &setting, &cfg).unwrap();
    let path = dir.path().join("r.jsonl");
    rec.write(&path).unwrap();
    assert_eq!(RunRecord::read(&path).unwrap(), rec);
}

#[test]
fn resumed_sweep_reuses_records_and_matches() {
    let dir = tempfile::tempdir().unwrap();
    let routes: Vec<_> = ["straight_01", "curve_01"]
        .iter()
        .map(|id| route(id))
        .collect();
    let mut spec = SweepSpec {
        name: "small".into(),
        policies: vec!["deadreckon".into()],
        routes,
        settings: vec![Setting::latency_ms(200.0)],
        config: EvalConfig::default(),
        out_dir: Some(dir.path().to_path_buf()),
        jobs: 1,
        resume: false,
    };
    let first = run_sweep(&spec).unwrap();
    let path = spec
        .record_path("deadreckon", &Setting::latency_ms(200.0), "curve_01")
        .unwrap();
    let stamp = std::fs::metadata(&path).unwrap().modified().unwrap();
    spec.resume = true;
    let second = run_sweep(&spec).unwrap();
    assert_eq!(first, second);
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), stamp);
    let loaded = load_sweep(&spec.sweep_dir().unwrap(), Some(&spec.settings)).unwrap();
    assert_eq!(loaded, first);
}

#[test]
fn schema_example_parses() {
    let text = include_str!("../routes/SCHEMA.md");
    let start = text.find("```toml\n").unwrap() + "```toml\n".len();
    let end = start + text[start..].find("```").unwrap();
    let spec =
        RouteSpec::from_toml_str(&text[start..end], std::path::Path::new("example.toml")).unwrap();
    assert_eq!(spec.id, "signal_demo");
    assert!((spec.length() - 100.0).abs() < 1e-9);
}
