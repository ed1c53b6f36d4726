//! The acceptance gate: one test per criterion, each printing its
//! pass/fail line. A failing criterion fails its test with the same
//! line, so `cargo test` and `oed validate` agree.

use oed_cli::validate;

fn check(id: u32) {
    let criterion = validate::criterion(id);
    println!("{}", criterion.line());
    assert!(criterion.passed, "{}", criterion.line());
}

#[test]
fn criterion_01_simple_scan_local_maxima() {
    check(1);
}

#[test]
fn criterion_02_restricted_prior_argmax() {
    check(2);
}

#[test]
fn criterion_03_two_experiment_grid_optimum() {
    check(3);
}

#[test]
fn criterion_04_reuse_estimator_bias() {
    check(4);
}

#[test]
fn criterion_05_eig_subadditivity() {
    check(5);
}

#[test]
fn criterion_06_quadrature_exactness() {
    check(6);
}

#[test]
fn criterion_07_pce_convergence() {
    check(7);
}

#[test]
fn criterion_08_surrogate_substitutability() {
    check(8);
}

#[test]
fn criterion_09_stochastic_optimization() {
    check(9);
}

#[test]
fn criterion_10_mcmc_correctness() {
    check(10);
}

#[test]
fn criterion_11_kinetics_invariants() {
    check(11);
}

#[test]
fn criterion_12_artifact_determinism() {
    check(12);
}
