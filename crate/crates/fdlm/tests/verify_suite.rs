//! Runs every built-in check end to end. These are the same routines the
//! command-line `verify` subcommand reports on; failures here mean the
//! recursive implementations no longer agree with their independent oracles.

use fdlm::verify;

#[test]
fn oracle_equivalence() {
    let out = verify::oracle_equivalence_check();
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn scalar_hand_example() {
    let out = verify::scalar_hand_example_check();
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn dyadic_monotonicity() {
    let out = verify::dyadic_monotonicity_check();
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn ffbs_moments() {
    let out = verify::ffbs_moment_check();
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn conjugate_update() {
    let out = verify::conjugate_update_check();
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn sokal_estimator() {
    let out = verify::sokal_check();
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn run_all_reports_every_check_once() {
    let outcomes = verify::run_all_checks();
    assert_eq!(outcomes.len(), 6);
    let mut names: Vec<_> = outcomes.iter().map(|o| o.name).collect();
    let total = names.len();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), total, "check names must be distinct");
    for o in &outcomes {
        assert!(o.passed, "{}: {}", o.name, o.detail);
    }
}
