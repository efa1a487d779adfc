use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn caprigid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caprigid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const COARSE: &[&str] = &["--nodes", "16,32"];

#[test]
fn threshold_writes_envelope_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = caprigid(&["threshold", "--n", "4", "--samples", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let doc = read_json(&out);
    assert_eq!(doc["schema_version"], "1");
    assert_eq!(doc["command"], "threshold");
    assert_eq!(doc["config"]["n"], 4);
    assert!(doc["timestamp"].as_str().unwrap().ends_with('Z'));
    let cstar = doc["results"]["cstar"].as_f64().unwrap();
    assert!((cstar - 2.0 / 7f64.sqrt()).abs() < 1e-12);
    for c in doc["checks"].as_array().unwrap() {
        assert_eq!(c["pass"], true, "{c}");
    }
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "c,beta,b2");
    assert_eq!(lines.len(), 21);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn results_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["identities", "--which", "prop41,omega_closed", "--seed", "5"];
        args.extend_from_slice(COARSE);
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        let o = caprigid(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        read_json(&out)
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(
        serde_json::to_string(&a["results"]).unwrap(),
        serde_json::to_string(&b["results"]).unwrap()
    );
    assert_eq!(a["checks"], b["checks"]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# threshold run\nn = 3\nsamples = 7\nc = 0.95\n").unwrap();
    let out = dir.path().join("r.json");
    let o = caprigid(&[
        "threshold",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc = read_json(&out);
    assert_eq!(doc["config"]["n"], 5);
    assert_eq!(doc["config"]["samples"], 7);
    assert_eq!(doc["config"]["c"], 0.95);
}

#[test]
fn bad_input_gives_error_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "n = 3\ncolour = red\n").unwrap();
    let out = dir.path().join("x");
    let o = caprigid(&["threshold", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("colour"));
    assert!(!out.exists());

    let o = caprigid(&["project", "--c", "1.2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = caprigid(&["expansion-order", "--eps", "0.1,0.2,0.05", "--nodes", "8,16"]);
    let err: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(err["command"], "expansion-order");
    assert_eq!(o.status.code(), Some(2));
    let o = caprigid(&["spectrum", "--unknown-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_check_sets_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.cfg");
    // A zero-width slope window cannot be met.
    std::fs::write(&cfg, "tol-slope-low = 3.5\ntol-slope-high = 3.5\n").unwrap();
    let mut args = vec!["expansion-order", "--which", "mean", "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(COARSE);
    let out = dir.path().join("e.json");
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let o = caprigid(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL mean_remainder_slope"));
    let doc = read_json(&out);
    assert_eq!(doc["checks"][0]["pass"], false);
    let csv = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("eps,remainder,ratio"));
}

#[test]
fn analysis_commands_pass_on_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for cmd in [
        &["check-background"][..],
        &["project", "--gauge-degree", "3"],
        &["key-estimate"],
        &["spectrum", "--degree", "2"],
    ] {
        let mut args = cmd.to_vec();
        args.extend_from_slice(COARSE);
        args.extend_from_slice(&["--out", d]);
        let o = caprigid(&args);
        assert_eq!(o.status.code(), Some(0), "{cmd:?}: {}", stdout(&o));
    }
    let spec = read_json(&dir.path().join("spectrum.json"));
    assert!(spec["results"]["kappa"].as_f64().unwrap() >= 0.5);
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,eigenvalue"));
}

#[test]
fn certify_zero_and_random() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let mut args = vec!["certify", "--amplitude", "0"];
    args.extend_from_slice(COARSE);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    assert_eq!(caprigid(&args).status.code(), Some(0));
    assert_eq!(read_json(&out)["results"]["verdict"], "rigid_consistent");

    let mut args = vec!["certify", "--amplitude", "0.05", "--seed", "9"];
    args.extend_from_slice(COARSE);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    assert_eq!(caprigid(&args).status.code(), Some(0));
    assert_eq!(read_json(&out)["results"]["verdict"], "hypotheses_violated");
}
