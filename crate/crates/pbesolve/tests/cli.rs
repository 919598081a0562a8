//! Exit-code contract of the binary: 0 success, 1 input error, 2 solver
//! failure.

use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pbesolve")
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("pbesolve_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_command_exits_one() {
    let out = tmp("unknown");
    let cfg = out.join("c.cfg");
    std::fs::write(&cfg, "").unwrap();
    let status = Command::new(bin())
        .args(["transmogrify", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn missing_config_exits_one() {
    let status = Command::new(bin())
        .args(["mesh", "--config", "/nonexistent/path.cfg"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn bad_key_exits_one() {
    let out = tmp("badkey");
    let cfg = out.join("c.cfg");
    std::fs::write(&cfg, "[geometry]\nr_mel = 1.0\n").unwrap();
    let status = Command::new(bin())
        .args(["mesh", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two() {
    let out = tmp("nonconv");
    let cfg = out.join("c.cfg");
    // One Newton iteration cannot converge the nonlinear problem.
    std::fs::write(
        &cfg,
        "[problem]\nspecies_concentrations = 1.0 1.0\nspecies_valences = 1 -1\n\
         [solver]\nnewton_max_iterations = 1\nnewton_tol = 1e-14\n",
    )
    .unwrap();
    let status = Command::new(bin())
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // the report with the partial history is still emitted
    assert!(out.join("report.jsonl").exists());
}
