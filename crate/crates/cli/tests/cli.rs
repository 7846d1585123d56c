use std::path::Path;
use std::process::{Command, Output};

fn popdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popdyn"))
        .args(args)
        .env_remove("POPDYN_THREADS")
        .output()
        .expect("binary runs")
}

fn shipped(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = popdyn(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    assert_eq!(popdyn(&["check", "--model", "lotka"]).status.code(), Some(1));
    assert_eq!(popdyn(&["solve", "--T", "-1"]).status.code(), Some(1));
}

#[test]
fn check_passes_for_builtins() {
    for model in ["arrigoni", "kretzschmar", "finite"] {
        let out = popdyn(&["check", "--model", model]);
        let text = String::from_utf8_lossy(&out.stdout);
        assert_eq!(out.status.code(), Some(0), "{model}: {text}");
        assert!(!text.contains("FAIL"));
    }
}

#[test]
fn simulate_and_solve_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = popdyn(&["simulate", "--model", "arrigoni", "--N", "200", "--T", "1", "--seed", "5", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("time,key,value\n"));
    assert!(traj.lines().any(|l| l == "0,S0,200"));

    let out = popdyn(&["solve", "--config", &shipped("kretzschmar.toml"), "--T", "1", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sol = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(sol.lines().any(|l| l == "0,x_0,0.6"));
    assert!(sol.lines().last().unwrap().starts_with("1,mu_norm,"));
}

#[test]
fn fit_without_a_run_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = popdyn(&["fit", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_plan_converges_and_refits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = popdyn(&["converge", "--config", &shipped("kretzschmar.toml"), "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.toml", "convergence.csv", "sup_errors.csv", "table.json", "fit.json", "exceedance.json", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);

    let before = std::fs::read_to_string(dir.path().join("fit.json")).unwrap();
    let out = popdyn(&["fit", d]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(dir.path().join("fit.json")).unwrap(), before);
}
