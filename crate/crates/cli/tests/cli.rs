use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rsps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A cut-down copy of the quick config, so each run takes well under a second.
fn tiny_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(workspace_file("configs/quick.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["rounds"] = 300.into();
    v["snapshot_every"] = 100.into();
    v["oracle"]["rounds"] = 5000.into();
    let path = dir.join("tiny.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn spectral_two_node_weighted() {
    let o = rsps(&["spectral", workspace_file("graphs/two_node.txt").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("pi = (0.333333, 0.666667)"), "{out}");
    assert!(out.contains("|lambda_2| = 0.250000"), "{out}");
}

#[test]
fn spectral_writes_json_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let o = rsps(&[
        "spectral",
        workspace_file("graphs/demo6.txt").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectral.json")).unwrap()).unwrap();
    let pi = v["pi"].as_array().unwrap();
    assert_eq!(pi.len(), 6);
}

#[test]
fn disconnected_graph_is_rejected() {
    let o = rsps(&["spectral", workspace_file("graphs/disconnected.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Assumption 2"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "schema_version": 1,
        "name": "broken",
        "seed": 1,
        "graph": { "kind": "file", "path": workspace_file("graphs/disconnected.txt") },
        "problem": { "kind": "logistic", "samples": 12, "features": 3, "equality_rows": 1, "sigma": 1.0 },
        "rounds": 10
    });
    let path = dir.path().join("broken.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = rsps(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(format!("{}{}", stdout(&o), stderr(&o)).contains("Assumption 2"));
}

#[test]
fn validate_shipped_configs() {
    for name in ["demo", "demo_edge_removed", "demo_larger_step", "quick"] {
        let path = workspace_file(&format!("configs/{name}.json"));
        let o = rsps(&["validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}{}", stdout(&o), stderr(&o));
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn run_is_byte_reproducible_and_analyzable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = rsps(&["--quiet", "run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["alg1.csv", "alg2_accuracy.csv", "dps_a.csv", "dps_b_snapshots.csv", "reference.json", "summary.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert!(x == y, "{file} differs between identical runs");
    }

    let o = rsps(&["analyze", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("z_envelope"));
}

#[test]
fn seed_override_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut refs = Vec::new();
    for seed in ["7", "8"] {
        let out = dir.path().join(seed);
        let o = rsps(&["--quiet", "--seed", seed, "oracle", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        refs.push(std::fs::read_to_string(out.join("reference.json")).unwrap());
    }
    assert_ne!(refs[0], refs[1]);
}

#[test]
fn oracle_prints_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = rsps(&["oracle", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("F* = "), "{out}");
    assert!(out.contains("x* = ("));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(rsps(&["bogus"]).status.code(), Some(2));
    assert_eq!(rsps(&["run"]).status.code(), Some(2));
    assert_eq!(rsps(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_is_a_runtime_error() {
    let o = rsps(&["run", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}
