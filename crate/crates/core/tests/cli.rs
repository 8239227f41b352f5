use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dyadic_cascade::io::Manifest;

const BIN: &str = env!("CARGO_BIN_EXE_dyadic-cascade");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("DYADIC_CASCADE_THREADS").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const ZERO: &str = r#"
[model]
kind = "obukhov"
lambda = 2.0
n_shells = 4

[datum]
kind = "vector"
values = [0.0, 0.0, 0.0, 0.0]

[integration]
t_end = 1.0
sample_interval = 0.25
"#;

#[test]
fn picard_prints_the_horizon() {
    let out = run(&["picard", "--d", "1", "--lambda", "2", "--s", "1", "--norm", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.0625");
    let out = run(&["picard", "--d", "1", "--lambda", "2", "--s", "1", "--norm", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_datum_simulation_writes_zeros() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", ZERO);
    let out_dir = tmp.path().join("out");
    let out = run(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let state = fs::read_to_string(out_dir.join("state.csv")).unwrap();
    let mut lines = state.lines();
    assert_eq!(lines.next(), Some("t,u0,u1,u2,u3"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert!(row.split(',').skip(1).all(|x| x == "0.0"), "{row}");
    }
    let diag = fs::read_to_string(out_dir.join("diag.csv")).unwrap();
    assert!(diag.lines().skip(1).all(|l| l.split(',').nth(1) == Some("0.0")));
    let m = Manifest::read(&out_dir).unwrap();
    assert_eq!(m.command, "simulate");
    assert!(m.files.contains(&"state.csv".to_string()));
    assert_eq!(m.termination["kind"], "reached_t_end");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &ZERO.replace("t_end = 1.0", "t_end = 1.0\nviscosity = 0.1"));
    let out = run(&["simulate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("viscosity") && err.contains("line 13"), "{err}");

    let good = write_config(tmp.path(), "zero.toml", ZERO);
    let out = run(&["simulate", "--config", &good, "--set", "model.lambda=0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("model.lambda"));

    let out = run(&["simulate", "--config", &good, "--seed", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["simulate", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_catches_a_broken_rhs() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = run(&["verify", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL energy_conservation"));
}

#[test]
fn tree_subcommand_reports_the_picard_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "tree.toml",
        r#"
[model]
kind = "branched_obukhov"
lambda = 2.0
d = 2
depth = 4

[datum]
kind = "random"
s = 2.0
seed = 1

[integration]
t_end = 1.0

[diagnostics]
hs = 1.0
"#,
    );
    let out_dir = tmp.path().join("t");
    let out = run(&["tree", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["nodes"], 31);
    assert!(summary["picard_time"].as_f64().unwrap() > 0.0);
    let header = fs::read_to_string(out_dir.join("state.csv")).unwrap();
    assert!(header.starts_with("t,u0,"));
    assert!(header.lines().next().unwrap().ends_with(",u30"));
}

#[test]
fn manifest_hash_tracks_semantics() {
    let tmp = tempfile::tempdir().unwrap();
    let hash = |name: &str, text: &str, extra: &[&str]| {
        let cfg = write_config(tmp.path(), name, text);
        let dir = tmp.path().join(format!("{name}.out"));
        let mut args = vec!["simulate", "--config", &cfg, "--out", "fixed"];
        args.extend_from_slice(extra);
        let mut cmd = Command::new(BIN);
        cmd.args(&args).current_dir(tmp.path());
        assert!(cmd.output().unwrap().status.success());
        let m = Manifest::read(&tmp.path().join("fixed")).unwrap();
        fs::rename(tmp.path().join("fixed"), dir).unwrap();
        m.config_hash
    };
    let base = hash("a.toml", ZERO, &[]);
    let reformatted = "# same run\n[integration]\nsample_interval=0.25\n   t_end   = 1.0\n[datum]\nvalues=[0.0,0.0,0.0,0.0]\nkind=\"vector\"\n[model]\nn_shells=4\nkind=\"obukhov\"\nlambda=2.0\n";
    assert_eq!(hash("b.toml", reformatted, &[]), base);
    assert_ne!(hash("c.toml", &ZERO.replace("t_end = 1.0", "t_end = 1.25"), &[]), base);
    assert_ne!(hash("d.toml", ZERO, &["--set", "integration.rel_tol=1e-9"]), base);
}
