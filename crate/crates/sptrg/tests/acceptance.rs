//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line with the measured tolerances. Run with `--nocapture` to see every
//! line, or via the `selftest` CLI subcommand for the full table.

use sptrg::selftest as st;

fn assert_check(c: st::Check) {
    let status = if c.passed { "PASS" } else { "FAIL" };
    println!("[{status}] {}", c.name);
    for line in c.detail.lines() {
        println!("    {line}");
    }
    assert!(c.passed, "{} failed:\n{}", c.name, c.detail);
}

#[test]
fn criterion_01_algebra_suite() {
    assert_check(st::c01_algebra());
}

#[test]
fn criterion_02_perfect_mps_suite() {
    assert_check(st::c02_perfect_mps());
}

#[test]
fn criterion_03_selection_rule() {
    assert_check(st::c03_selection_rule());
}

#[test]
fn criterion_04_gate_oracle() {
    assert_check(st::c04_gate_oracle());
}

#[test]
fn criterion_05_circuit_level_ec() {
    assert_check(st::c05_circuit_ec());
}

#[test]
fn criterion_06_no_false_positives() {
    assert_check(st::c06_no_false_positives());
}

#[test]
fn criterion_07_majority_flow_oracle() {
    assert_check(st::c07_flow_oracle());
}

#[test]
fn criterion_08_convergence_depth_bound() {
    assert_check(st::c08_depth_bound());
}

#[test]
fn criterion_09_gerrymander() {
    assert_check(st::c09_gerrymander());
}

#[test]
fn criterion_10_cluster_sweep() {
    assert_check(st::c10_cluster_sweep());
}

#[test]
fn criterion_11_ancilla_purity() {
    assert_check(st::c11_purity());
}

#[test]
fn criterion_12_disentangler() {
    assert_check(st::c12_disentangler());
}

#[test]
fn criterion_13_ssb() {
    assert_check(st::c13_ssb());
}

#[test]
fn criterion_14_non_mnc() {
    assert_check(st::c14_nonmnc());
}

#[test]
fn criterion_15_determinism() {
    assert_check(st::c15_determinism());
}
