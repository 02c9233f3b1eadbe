//! Acceptance gate: one test per criterion, each printing its summary line.
//!
//! The Monte-Carlo criteria are heavy; the full target takes on the order of
//! an hour on one core. Run with `--nocapture` to see the per-criterion
//! lines as they complete.

use std::sync::OnceLock;

use aircomp::acceptance::{self, CriterionResult};

fn check(r: CriterionResult) {
    println!("{}", r.summary_line());
    assert!(r.passed, "{}", r.summary_line());
}

fn shared_3_4() -> &'static (CriterionResult, CriterionResult) {
    static CELL: OnceLock<(CriterionResult, CriterionResult)> = OnceLock::new();
    CELL.get_or_init(acceptance::criteria_3_4)
}

#[test]
fn criterion_01_gradient_oracle() {
    check(acceptance::criterion_1());
}

#[test]
fn criterion_02_entry_phase_oracle() {
    check(acceptance::criterion_2());
}

#[test]
fn criterion_03_monotone_traces() {
    check(shared_3_4().0.clone());
}

#[test]
fn criterion_04_power_certificate() {
    check(shared_3_4().1.clone());
}

#[test]
fn criterion_05_orthogonal_closed_form() {
    check(acceptance::criterion_5());
}

#[test]
fn criterion_06_large_array_gap() {
    check(acceptance::criterion_6());
}

#[test]
fn criterion_07_scheme_ordering() {
    check(acceptance::criterion_7());
}

#[test]
fn criterion_08_trend_properties() {
    check(acceptance::criterion_8());
}

#[test]
fn criterion_09_empirical_vs_analytic() {
    check(acceptance::criterion_9());
}

#[test]
fn criterion_10_deterministic_csv() {
    check(acceptance::criterion_10());
}
