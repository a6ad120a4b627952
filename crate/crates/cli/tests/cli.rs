use std::path::Path;
use std::process::Command;

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn vefs(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vefs")).args(args).output().unwrap()
}

#[test]
fn equilibrium_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = vefs(&["run", &config("equilibrium.ini"), "--out", out, "--override", "time.t_final=0.1"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS")));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("timeseries.csv").exists());
    assert!(dir.path().join("config.resolved.ini").exists());
}

#[test]
fn scenario_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = vefs(&["run", &config("equilibrium.ini"), "--scenario", "manufactured", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("convergence.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ini");
    std::fs::write(&bad, "[run]\nscenario = equilibrium\n[grid]\nnx = lots\n").unwrap();
    let o = vefs(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    assert_eq!(vefs(&["run", "/nonexistent.ini"]).status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // a wavy surface is not at rest, so the equilibrium check must fail
    let o = vefs(&[
        "run",
        &config("equilibrium.ini"),
        "--out",
        out,
        "--override",
        "profile.kind=sinusoid",
        "--override",
        "time.t_final=0.1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL equilibrium_field_norms"));
}

#[test]
fn solver_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = vefs(&["run", &config("relaxing_bump.ini"), "--out", out, "--override", "tolerances.max_outer=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no convergence"));
}
