use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SPHERE: &str = r#"{"background": 0.0, "background_color": [0.2, 0.3, 0.4],
  "primitives": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.15, "density": 1e9, "color": [1, 0, 0]}]}"#;

fn pppnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pppnav"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is JSON")
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn sphere_dir() -> TempDir {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("scene.json"), SPHERE).unwrap();
    d
}

const BASE: [&str; 6] = ["--scene", "scene.json", "--dims", "24", "--out-dir", "out"];

fn with<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(&BASE);
    v.extend_from_slice(extra);
    v
}

#[test]
fn build_purr_is_deterministic_and_timed() {
    let d = sphere_dir();
    let s = stdout_json(&pppnav(d.path(), &with("build-purr", &[])));
    assert_eq!(s["dims"], serde_json::json!([23, 23, 23]));
    let stages = s["stages"].as_object().unwrap();
    assert_eq!(stages.len(), 4);
    assert!(stages.values().all(|v| v.as_f64().unwrap() >= 0.0));
    assert!(s["unsafe_cells"].as_u64().unwrap() > 0);

    let first = fs::read(d.path().join("out/map.purr")).unwrap();
    let header: Value = serde_json::from_slice(first.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(header["config_hash"], s["config_hash"]);
    assert_eq!(header["dims"], s["dims"]);

    stdout_json(&pppnav(d.path(), &with("build-purr", &["--sequential"])));
    assert_eq!(fs::read(d.path().join("out/map.purr")).unwrap(), first);
}

#[test]
fn plan_outcomes() {
    let d = sphere_dir();
    stdout_json(&pppnav(d.path(), &with("build-purr", &[])));

    let s = stdout_json(&pppnav(d.path(), &with("plan", &["--start", "0.1,0.5,0.5", "--goal", "0.9,0.5,0.5", "--csv"])));
    assert_eq!(s["status"], "ok");
    let rec = read_json(d.path().join("out/plan.json"));
    assert_eq!(rec["config_hash"], s["config_hash"]);
    assert!(!rec["trajectory"]["segments"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(d.path().join("out/plan.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash {}\nt,x,y,z,speed\n", s["config_hash"].as_str().unwrap())));

    let s = stdout_json(&pppnav(d.path(), &with("plan", &["--start", "0.1,0.1,0.1", "--goal", "0.1,0.1,0.1"])));
    assert_eq!(s["path_voxels"], 1);
    assert!(s["objective"].as_f64().unwrap().abs() < 1e-9);

    let o = pppnav(d.path(), &with("plan", &["--start", "0.1,0.5,0.5", "--goal", "0.5,0.5,0.5"]));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "goal_unsafe");
    let rec = read_json(d.path().join("out/plan.json"));
    assert_eq!(rec["status"], "failed");
    assert_eq!(rec["error"], "goal_unsafe");
}

#[test]
fn plan_without_map_is_config_error() {
    let d = sphere_dir();
    let o = pppnav(d.path(), &with("plan", &["--start", "0.1,0.5,0.5", "--goal", "0.9,0.5,0.5"]));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "config");
}

#[test]
fn sample_of_empty_scene_is_empty() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("scene.json"), r#"{"background": 0.0}"#).unwrap();
    let s = stdout_json(&pppnav(d.path(), &with("sample", &[])));
    assert_eq!(s["count"], 0);
    let ply = fs::read_to_string(d.path().join("out/points.ply")).unwrap();
    assert!(ply.contains("element vertex 0\n"));
    assert!(ply.contains(&format!("comment config_hash {}\n", s["config_hash"].as_str().unwrap())));
    assert!(ply.trim_end().ends_with("end_header"));
}

#[test]
fn validate_empty_scene_is_always_safe() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("scene.json"), r#"{"background": 0.0}"#).unwrap();
    stdout_json(&pppnav(d.path(), &with("build-purr", &[])));
    let s = stdout_json(&pppnav(d.path(), &with("validate", &["--poses", "10", "--realizations", "20"])));
    assert_eq!(s["aggregate_rate"], 1.0);
    let report = read_json(d.path().join("out/validate.json"));
    assert_eq!(report["config_hash"], s["config_hash"]);
    let poses = fs::read_to_string(d.path().join("out/poses.csv")).unwrap();
    assert_eq!(poses.lines().count(), 2 + 10);
}

#[test]
fn stats_entropy_of_unit_homogeneous_scene() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("scene.json"), r#"{"background": 1.0}"#).unwrap();
    let s = stdout_json(&pppnav(d.path(), &with("stats", &["--gamma", "1", "--a-ref", "1"])));
    assert!((s["entropy"].as_f64().unwrap() - 1.0).abs() < 1e-12, "{s}");
    assert_eq!(read_json(d.path().join("out/stats.json"))["config_hash"], s["config_hash"]);
}

#[test]
fn render_check_agrees() {
    let d = sphere_dir();
    let s = stdout_json(&pppnav(
        d.path(),
        &with("render-check", &["--origin", "0,0.5,0.5", "--dir", "1,0,0", "--samples", "2000"]),
    ));
    assert_eq!(s["pass"], true);
    let csv = fs::read_to_string(d.path().join("out/render_depth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 101);
}

#[test]
fn bad_inputs_exit_2() {
    let d = sphere_dir();
    fs::write(d.path().join("bad.json"), r#"{"ppp": {"sigmaa": 0.9}}"#).unwrap();
    let o = pppnav(d.path(), &with("build-purr", &["--config", "bad.json"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("ppp.sigmaa"));

    let o = pppnav(d.path(), &["build-purr", "--scene", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pppnav(d.path(), &["build-purr", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pppnav(d.path(), &with("build-purr", &["--sigma", "1.5"]));
    assert_eq!(o.status.code(), Some(2));
}
