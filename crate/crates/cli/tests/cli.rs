use std::path::Path;
use std::process::{Command, Output};

use dirac_edge::io::{read_csv, read_dump, DumpData};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dirac-edge"));
    c.env_remove("DIRAC_EDGE_THREADS");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn domain_wall_speed_scenario_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["run", "--scenario", "bundled:domain-wall-speed"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("domain-wall-speed");
    let (header, rows) = read_csv(dir.join("speed.csv")).unwrap();
    assert_eq!(header[0], "measured_speed");
    assert!((rows[0][0] - 1.0).abs() < 0.05, "speed {}", rows[0][0]);
    assert!(rows[0][1] < 0.0);
    let m = manifest(&dir);
    assert_eq!(m["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(m["wall_time_s"].as_f64().unwrap() > 0.0);
    let dump = read_dump(dir.join("field.bin")).unwrap();
    assert_eq!(dump.dims, vec![2, 256, 256]);
    assert!(matches!(dump.data, DumpData::Complex(_)));
}

#[test]
fn malformed_json_exits_with_schema_code() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, "{\n  \"name\": \"bad\",\n  \"task\": \"reduce\",,\n}").unwrap();
    let o = run(&["run", "--scenario", p.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(tmp.path().join("bad").join("error.json").exists());
}

#[test]
fn step_size_violation_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("cfl.json");
    std::fs::write(
        &p,
        r#"{"name":"cfl","task":"evolve","symbol":{"kind":"periodic-wall","ell":1},"h":0.1,"grid":{"n":256,"len":6.4},"t_end":0.1,"dt":0.5}"#,
    )
    .unwrap();
    let o = run(&["evolve", "--scenario", p.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("RK4 stability"), "{err}");
    let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("cfl/error.json")).unwrap()).unwrap();
    assert_eq!(diag["kind"], "numerical");
}

#[test]
fn task_mismatch_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["haldane", "--scenario", "bundled:normal-form-suite"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_runs_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run(&["reduce", "--scenario", "bundled:normal-form-suite"], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("normal-form-suite/reduce.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let (_, rows) = read_csv(a.path().join("normal-form-suite/reduce.csv")).unwrap();
    assert!(rows.len() > 150);
    assert!(rows.iter().all(|r| r[4] < 1e-9 && r[5] < 1e-9 && r[7] < 1e-10));
}

#[test]
fn several_scenarios_share_a_pool() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--scenario", "bundled:haldane-cone", "--scenario", "bundled:curved-wall-trace", "--scenario", "bundled:wall-analysis"])
        .arg("--out")
        .arg(tmp.path())
        .env("DIRAC_EDGE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&tmp.path().join("haldane-cone"))["threads"], 2);
    assert!(tmp.path().join("haldane-cone/bands.csv").exists());
    assert!(tmp.path().join("curved-wall-trace/trajectory.csv").exists());
    assert!(tmp.path().join("wall-analysis/analyze.json").exists());
}

#[test]
fn unknown_bundled_name_and_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["run", "--scenario", "bundled:nope"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["run", "--scenario", "/nonexistent/x.json"], tmp.path()).status.code(), Some(1));
}

#[test]
fn scenarios_can_be_exported() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().args(["scenarios", "--write"]).arg(tmp.path()).output().unwrap();
    assert!(o.status.success());
    let listed = String::from_utf8_lossy(&o.stdout);
    assert!(listed.lines().any(|l| l == "domain-wall-speed"));
    for name in listed.lines() {
        let src = std::fs::read_to_string(tmp.path().join(format!("{name}.json"))).unwrap();
        dirac_edge::scenario::parse_scenario(&src).unwrap();
    }
}
