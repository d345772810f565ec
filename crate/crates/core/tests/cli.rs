use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dynsimplex"));
    c.env_remove("DS_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dynsimplex")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
  "schema_version": 1,
  "strategies": ["GS"],
  "tracks": ["downtown"],
  "runs_per_cell": 2,
  "timing_iterations": [50, 100],
  "timing_calls": 2
}"#;

#[test]
fn run_writes_two_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics_none.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(
        lines[0],
        "strategy,track,seed,travel_time,rc,col_v,col_o,switches,infraction,mean_decision_latency_ms"
    );
    assert!(lines[1].starts_with("GS,downtown,"));
    assert!(out.join("summary.csv").exists());
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 3);

    let s = run(&["summarize", out.join("metrics_none.csv").to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(0));
    let text = String::from_utf8(s.stdout).unwrap();
    assert!(text.contains("GS,downtown,2,"));
}

#[test]
fn seed_override_changes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let read = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = bin()
            .env("DS_SEED", seed)
            .args(["run", &cfg, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read_to_string(out.join("metrics_none.csv")).unwrap()
    };
    assert_eq!(read("5", "a"), read("5", "b"));
    assert_ne!(read("5", "c"), read("6", "d"));
    let o = bin().env("DS_SEED", "abc").args(["run", &cfg]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["run", "/nonexistent/config.json"]).status.code(), Some(2));
    let bad = write_config(dir.path(), r#"{"schema_version": 1, "strategies": ["DS"], "runs_per_cell": 0}"#);
    assert_eq!(run(&["run", &bad]).status.code(), Some(2));
    let wrong = write_config(dir.path(), r#"{"schema_version": 9, "strategies": ["DS"]}"#);
    assert_eq!(run(&["run", &wrong]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_metrics_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    fs::write(&p, "").unwrap();
    assert_eq!(run(&["summarize", p.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&p, "a,b\n1,2\n").unwrap();
    let o = run(&["summarize", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn sweep_emits_radar_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "strategies": ["DS"], "tracks": ["freeway"], "runs_per_cell": 1,
            "failure_schedules": ["intermittent"]}"#,
    );
    let out = dir.path().join("sw");
    let o = run(&[
        "sweep",
        &cfg,
        "--param",
        "alpha1",
        "--values",
        "0,1",
        "--param",
        "alpha3",
        "--values",
        "0,0.5,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    for col in ["alpha1", "alpha3", "performance_score", "infraction_score", "switch_number"] {
        assert!(header.split(',').any(|c| c == col), "missing {col}");
    }
    assert_eq!(lines.count(), 6);
    let mismatched = run(&["sweep", &cfg, "--param", "alpha1", "--param", "alpha3", "--values", "0"]);
    assert_eq!(mismatched.status.code(), Some(2));
}

#[test]
fn lut_round_trips_into_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let lut = dir.path().join("lut.csv");
    let o = run(&["lut", &cfg, "--out", lut.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let with_lut = SMALL.replacen(
        "\"runs_per_cell\": 2,",
        &format!("\"runs_per_cell\": 2, \"lut_path\": {:?},", lut.to_str().unwrap()),
        1,
    );
    let cfg2 = dir.path().join("c2.json");
    fs::write(&cfg2, with_lut).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["run", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(
        run(&["run", cfg2.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.code(),
        Some(0)
    );
    assert_eq!(
        fs::read(a.join("metrics_none.csv")).unwrap(),
        fs::read(b.join("metrics_none.csv")).unwrap()
    );
}
