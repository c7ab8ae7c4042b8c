//! One test per acceptance criterion; each prints a single PASS/FAIL line
//! straight to stderr so the line is visible without `--nocapture`.

use std::io::Write;

use fbspde::verify::{report_json, run_check, verify_all, Status, Tier, VerifyConfig};

const SEED: u64 = 7;

fn criterion(id: &str) {
    let (entry, seconds) = run_check(id, SEED, Tier::Full).unwrap();
    let verdict = if entry.status == Status::Pass { "PASS" } else { "FAIL" };
    let line = format!(
        "acceptance {:>2} {:<26} {} measured={} tolerance={} ({:.1}s)\n",
        entry.criterion,
        entry.id,
        verdict,
        entry.measured.map_or("-".into(), |m| format!("{m:.3e}")),
        entry.tolerance.map_or("-".into(), |m| format!("{m:.3e}")),
        seconds
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert_eq!(entry.status, Status::Pass, "{}", serde_json::to_string_pretty(&entry).unwrap());
}

#[test]
fn c01_kernel_mass() {
    criterion("kernel-mass");
}

#[test]
fn c02_gaussian_reduction() {
    criterion("gaussian-reduction");
}

#[test]
fn c03_chapman_kolmogorov() {
    criterion("chapman-kolmogorov");
}

#[test]
fn c04_operator_cross_validation() {
    criterion("operator-cross-validation");
}

#[test]
fn c05_kernel_bound_stability() {
    criterion("kernel-bound-stability");
}

#[test]
fn c06_stable_kernel_duality() {
    criterion("stable-kernel-duality");
}

#[test]
fn c07_solver_equivalence() {
    criterion("solver-equivalence");
}

#[test]
fn c08_feynman_kac() {
    criterion("feynman-kac");
}

#[test]
fn c09_regression_closed_form() {
    criterion("regression-closed-form");
}

#[test]
fn c10_holder_ratio() {
    criterion("holder-ratio");
}

#[test]
fn c11_zakai_closed_form() {
    criterion("zakai-closed-form");
}

#[test]
fn c12_adjoint_duality() {
    criterion("adjoint-duality");
}

#[test]
fn c13_maximum_principle() {
    criterion("maximum-principle");
}

#[test]
fn c14_determinism() {
    criterion("determinism");
    let cfg = VerifyConfig {
        seed: SEED,
        tier: Tier::Quick,
        only: Some(vec!["chapman-kolmogorov".into(), "zakai-closed-form".into(), "solver-equivalence".into()]),
    };
    let a = report_json(&verify_all(&cfg).unwrap().report).unwrap();
    let b = report_json(&verify_all(&cfg).unwrap().report).unwrap();
    assert_eq!(a, b);
}
