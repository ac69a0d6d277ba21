//! One pass/fail line per acceptance criterion. Criteria 1 to 8 run in
//! process; criterion 9 runs the `selftest` subcommand end to end.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use spatialemb_core::selfcheck::{run_check, Options};

const SELFTEST_BUDGET: Duration = Duration::from_secs(600);

fn report(line: &str) {
    // Direct handle writes are not captured by the test harness.
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance() {
    let opts = Options::default();
    let mut failed = Vec::new();
    for id in 1..=8u8 {
        let outcome = run_check(id, &opts).expect("known id");
        report(&outcome.line());
        if !outcome.passed {
            failed.push(id);
        }
    }

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_spatialemb"))
        .arg("selftest")
        .output()
        .expect("selftest runs");
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines = stdout.lines().filter(|l| l.starts_with("criterion ")).count();
    let passed = out.status.success() && lines == 8 && elapsed < SELFTEST_BUDGET;
    report(&format!(
        "criterion 9 [{}] selftest end to end: exit {:?}, {lines}/8 checks reported ({:.2}s of {}s)",
        if passed { "PASS" } else { "FAIL" },
        out.status.code(),
        elapsed.as_secs_f64(),
        SELFTEST_BUDGET.as_secs()
    ));
    if !passed {
        failed.push(9);
        report(&stdout);
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
