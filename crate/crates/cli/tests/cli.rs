use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn haarfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haarfact"))
        .args(args)
        .env_remove("HAARFACT_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_factor_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    let cert = dir.path().join("cert.json");
    let out = haarfact(&["gen", "--kind", "diagonal", "--nmax", "3", "--seed", "7", "--numeric", "rational", "-o", p(&op)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = haarfact(&["factor", "--op", p(&op), "--space", "lp:1:independent", "--eta", "0.1", "--delta", "0.6", "-o", p(&cert)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = haarfact(&["verify", "--cert", p(&cert), "--op", p(&op), "--samples", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn tampered_scalar_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    let cert = dir.path().join("cert.json");
    haarfact(&["gen", "--kind", "identity", "--nmax", "2", "--numeric", "rational", "-o", p(&op)]);
    assert!(haarfact(&["factor", "--op", p(&op), "--space", "lp:2:constant", "-o", p(&cert)]).status.success());
    let mut c = read(&cert);
    c["c"] = Value::String("1/2".into());
    std::fs::write(&cert, serde_json::to_string(&c).unwrap()).unwrap();
    let out = haarfact(&["verify", "--cert", p(&cert), "--op", p(&op), "--samples", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scalar mismatch"));
}

#[test]
fn replay_against_another_operator_fails() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let cert = dir.path().join("cert.json");
    haarfact(&["gen", "--kind", "diagonal", "--nmax", "2", "--seed", "1", "--numeric", "rational", "-o", p(&a)]);
    haarfact(&["gen", "--kind", "diagonal", "--nmax", "2", "--seed", "2", "--numeric", "rational", "-o", p(&b)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(haarfact(&["factor", "--op", p(&a), "--space", "lp:2:independent", "-o", p(&cert)]).status.success());
    let out = haarfact(&["verify", "--cert", p(&cert), "--op", p(&b), "--samples", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest mismatch"));
}

#[test]
fn large_diagonal_mode_rejects_a_small_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    haarfact(&["gen", "--kind", "diagonal", "--nmax", "2", "--values", "0.6,0.8", "-o", p(&op)]);
    let out = haarfact(&["factor", "--op", p(&op), "--space", "lp:2:independent", "--delta", "0.9", "--mode", "large-diagonal"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seeds_reproduce_and_env_is_honoured() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_haarfact"));
        cmd.env_remove("HAARFACT_SEED").args(args);
        if let Some(s) = env {
            cmd.env("HAARFACT_SEED", s);
        }
        cmd.output().unwrap().stdout
    };
    let args = ["gen", "--kind", "random", "--nmax", "1"];
    let a = run(Some("9"), &args);
    let b = run(None, &["gen", "--kind", "random", "--nmax", "1", "--seed", "9"]);
    let c = run(None, &args);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn factor_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    let c1 = dir.path().join("c1.json");
    let c4 = dir.path().join("c4.json");
    haarfact(&["gen", "--kind", "perturbed-identity", "--gamma", "0.1", "--nmax", "2", "--seed", "3", "-o", p(&op)]);
    let base = ["factor", "--op", p(&op), "--space", "lp:1:independent", "--eta", "0.05", "--norm-samples", "4"];
    assert!(haarfact(&[&["--threads", "1"], &base[..], &["-o", p(&c1)]].concat()).status.success());
    assert!(haarfact(&[&["--threads", "4"], &base[..], &["-o", p(&c4)]].concat()).status.success());
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c4).unwrap());
}

#[test]
fn formulas_print_the_depths() {
    let out = haarfact(&["formulas", "--n", "2", "--gamma", "1", "--eta", "0.5"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["N0", "N1", "N2"] {
        assert!(v[key].is_string(), "{key} missing in {v}");
    }
}

#[test]
fn norm_of_a_file_vector() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.json");
    std::fs::write(&v, r#"{"n_max":0,"mode":"rational","coefficients":{"0:1":"1"}}"#).unwrap();
    let out = haarfact(&["norm", "--space", "lp:2:constant", "--vec", p(&v)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["norm"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn bench_csv_has_a_header() {
    let out = haarfact(&["bench", "--suite", "mc", "--mc-cases", "3", "--mc-samples", "500"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("suite,case,n_max,resolution,mode,wall_ms,value"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(haarfact(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(haarfact(&["gen", "--kind", "bogus", "--nmax", "1"]).status.code(), Some(1));
    assert_eq!(haarfact(&["verify", "--cert", "/nonexistent", "--op", "/nonexistent"]).status.code(), Some(1));
}
