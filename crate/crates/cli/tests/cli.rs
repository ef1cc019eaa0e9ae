use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridkvh"))
}

#[test]
fn scenarios_lists_builtins() {
    let out = bin().arg("scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "canonical_wave"));
    assert!(text.lines().any(|l| l == "closure"));
}

#[test]
fn unknown_suite_exits_with_validation_code() {
    let out = bin().args(["check", "--suite", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_reports_line_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[grid]\nmode = \"finite\"\nnq = -4\nnp = 8\nn_levels = 2\nlp = 8.0\n\n[model]\npotential = \"analytic_alpha\"\n\n[run]\ndt = 0.001\nsteps = 1\n").unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("nq"), "{err}");
}

#[test]
fn builtin_run_succeeds_with_fixed_threads() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("HYBRIDKVH_THREADS", "2")
        .args(["run", "--config", "tiny_oracle", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("diagnostics.csv").exists());
    assert!(dir.path().join("manifest.toml").exists());
}

#[test]
fn invalid_thread_count_is_rejected() {
    let out = bin()
        .env("HYBRIDKVH_THREADS", "many")
        .arg("scenarios")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
