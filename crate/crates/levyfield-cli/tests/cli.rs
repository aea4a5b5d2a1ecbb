//! End-to-end tests of the CLI surface: exit codes, artifact files,
//! diagnostics naming bad keys, and byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_levyfield")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

const ORACLE_SMALL: &str = r#"
[model]
family = "pareto"
alpha = 1.0
scale = 1.0

[kernel]
family = "gaussian"
sigma = 1.0
dimension = 1

[index_set]
bodies = [{ shape = "box", corner = [0.0], sides = [1.0] }]

[experiment]
replicates = 1500
seed = 9
mode = "atom_max"
volumes = [500.0]
x_grid = [0.5, 1.0, 2.0]

[tolerances]
oracle_frechet_abs = 0.05
"#;

#[test]
fn validate_accepts_clean_config_and_rejects_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, ORACLE_SMALL).unwrap();
    let out = run(&["validate", good.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // drop a required key: the diagnostic must name it and exit 2
    let broken = dir.path().join("broken.toml");
    fs::write(&broken, ORACLE_SMALL.replace("alpha = 1.0\n", "")).unwrap();
    let out = run(&["validate", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("alpha"),
        "diagnostic should name the key: {msg}"
    );
}

#[test]
fn validate_rejects_infinite_variation_light_part() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ORACLE_SMALL
        .replace("family = \"pareto\"", "family = \"stable\"")
        .replace("alpha = 1.0", "alpha = 1.5")
        + "\n[sim]\nlight_part = true\n";
    let path = dir.path().join("bad_track.toml");
    fs::write(&path, cfg).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("infinite"));
}

#[test]
fn oracle_run_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oracle.toml");
    fs::write(&cfg, ORACLE_SMALL).unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    let r1 = run(&[
        "oracle-test",
        cfg.to_str().unwrap(),
        "--out-dir",
        out1.to_str().unwrap(),
    ]);
    assert!(
        r1.status.success(),
        "{}",
        String::from_utf8_lossy(&r1.stderr)
    );
    let r2 = run(&[
        "oracle-test",
        cfg.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
    ]);
    assert!(r2.status.success());

    for name in [
        "oracle_test.json",
        "oracle_test.csv",
        "oracle_test.manifest.json",
    ] {
        assert!(out1.join(name).exists(), "missing {name}");
    }
    // byte-identical payloads; timestamps live only in the manifest
    let j1 = fs::read(out1.join("oracle_test.json")).unwrap();
    let j2 = fs::read(out2.join("oracle_test.json")).unwrap();
    assert_eq!(j1, j2);
    let c1 = fs::read(out1.join("oracle_test.csv")).unwrap();
    let c2 = fs::read(out2.join("oracle_test.csv")).unwrap();
    assert_eq!(c1, c2);

    // manifest carries the digest and the output paths
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out1.join("oracle_test.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    for output in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(output.as_str().unwrap()).exists());
    }
}

#[test]
fn seed_override_changes_the_draw_but_not_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oracle.toml");
    fs::write(&cfg, ORACLE_SMALL).unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    run(&[
        "oracle-test",
        cfg.to_str().unwrap(),
        "--out-dir",
        out1.to_str().unwrap(),
    ]);
    run(&[
        "oracle-test",
        cfg.to_str().unwrap(),
        "--seed",
        "1234",
        "--out-dir",
        out2.to_str().unwrap(),
    ]);
    let j1: serde_json::Value =
        serde_json::from_slice(&fs::read(out1.join("oracle_test.json")).unwrap()).unwrap();
    let j2: serde_json::Value =
        serde_json::from_slice(&fs::read(out2.join("oracle_test.json")).unwrap()).unwrap();
    assert_eq!(j1["seed"], 9);
    assert_eq!(j2["seed"], 1234);
    assert_ne!(j1["ladder"], j2["ladder"]);
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // an absurd proximity tolerance no finite sample can meet
    let cfg_text = ORACLE_SMALL.replace("oracle_frechet_abs = 0.05", "oracle_frechet_abs = 1e-9");
    let cfg = dir.path().join("strict.toml");
    fs::write(&cfg, cfg_text).unwrap();
    let out = run(&[
        "oracle-test",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("[FAIL]"),
        "failing criterion must be named: {stdout}"
    );
}

#[test]
fn simulate_zero_mass_model_dumps_a_flat_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = r#"
[model]
family = "pareto"
alpha = 1.0
scale = 0.0

[kernel]
family = "gaussian"
sigma = 1.0
dimension = 1

[index_set]
bodies = [{ shape = "box", corner = [0.0], sides = [4.0] }]

[experiment]
replicates = 100
seed = 3

[sim]
grid_step = 0.5
"#;
    let cfg = dir.path().join("zero.toml");
    fs::write(&cfg, cfg_text).unwrap();
    let out = run(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let field = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut lines = field.lines();
    assert_eq!(lines.next().unwrap(), "x1,value");
    for line in lines {
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(value, 0.0);
    }
    assert!(dir.path().join("atoms.csv").exists());
}
