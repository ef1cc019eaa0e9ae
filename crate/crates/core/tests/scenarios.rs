use std::fs;

use hybridkvh::liouvillian::Liouvillian;
use hybridkvh::propagator::{evolve_with, RunState};
use hybridkvh::scenario::builtin::{builtin_scenario, BUILTIN};
use hybridkvh::scenario::checks::check_suite;
use hybridkvh::scenario::config::{parse_config, RunKind};
use hybridkvh::scenario::run::{initial_state, run_scenario, CLOSURE_HEADER, WAVE_HEADER};
use hybridkvh::scenario::snapshot::Snapshot;
use hybridkvh::Error;

#[test]
fn shipped_scenarios_roundtrip() {
    for (name, text) in BUILTIN {
        let c = parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = parse_config(&c.to_config_string()).unwrap();
        assert_eq!(again, c, "{name}");
        assert_eq!(again.to_config_string(), c.to_config_string(), "{name}");
    }
}

#[test]
fn zero_steps_writes_manifest_and_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = builtin_scenario("tiny_oracle").unwrap();
    c.run.steps = 0;
    let report = run_scenario(&c, dir.path()).unwrap();
    assert_eq!(report.rows, 1);
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with(WAVE_HEADER));
    let manifest: toml::Table = fs::read_to_string(dir.path().join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(manifest["status"].as_str(), Some("ok"));
    assert_eq!(
        parse_config(manifest["config"].as_str().unwrap()).unwrap(),
        c
    );
}

#[test]
fn reruns_are_byte_identical() {
    let c = builtin_scenario("tiny_oracle").unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_scenario(&c, a.path()).unwrap();
    run_scenario(&c, b.path()).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "diagnostics.csv"), read(&b, "diagnostics.csv"));
    assert_eq!(
        read(&a, "snapshots/step_00000100.hkvh"),
        read(&b, "snapshots/step_00000100.hkvh")
    );
}

#[test]
fn snapshot_on_disk_matches_propagated_state() {
    let dir = tempfile::tempdir().unwrap();
    let c = builtin_scenario("tiny_oracle").unwrap();
    run_scenario(&c, dir.path()).unwrap();
    let grid = c.phase_grid().unwrap();
    let l = Liouvillian::new(&grid, &c.hamiltonian(&grid).unwrap()).unwrap();
    let psi0 = initial_state(&c, &grid).unwrap();
    let end = evolve_with(
        psi0,
        &l,
        c.run.dt,
        c.run.steps,
        None,
        &mut |_: &RunState| Ok(()),
        false,
    )
    .unwrap();
    let snap = Snapshot::load(&dir.path().join("snapshots/step_00000100.hkvh")).unwrap();
    assert_eq!(snap.dims, vec![grid.nq, grid.np, grid.nx]);
    let psi = snap.into_wavefunction(&grid).unwrap();
    assert_eq!(psi.data, end.psi.data);
}

#[test]
fn closure_scenario_writes_conserved_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = builtin_scenario("closure").unwrap();
    assert_eq!(c.run.kind, RunKind::Closure);
    c.run.steps = 20;
    run_scenario(&c, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("closure.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CLOSURE_HEADER));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert!((r[1] - rows[0][1]).abs() < 1e-12);
        assert!(r[3] < 1e-10);
        assert!(r[4] > 0.0);
    }
}

#[test]
fn oversized_step_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = builtin_scenario("tiny_oracle").unwrap();
    c.run.dt = 10.0;
    let e = run_scenario(&c, dir.path()).unwrap_err();
    assert!(matches!(e, Error::StepTooLarge { .. }));
    assert!(e.is_validation());
}

#[test]
fn unknown_suite_is_rejected() {
    let e = check_suite("everything").unwrap_err();
    assert!(e.is_validation());
}

#[test]
fn identities_suite_passes() {
    let r = check_suite("identities").unwrap();
    assert!(r.all_pass(), "{}", r.to_csv());
    assert!(r
        .to_csv()
        .starts_with("suite,check,status,measured,bound\n"));
}
