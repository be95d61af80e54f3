//! One line per acceptance criterion; any failure fails the target.

use std::process::ExitCode;

use joycekit::acceptance::{run_all, DEFAULT_SEED};

fn main() -> ExitCode {
    let reports = run_all(DEFAULT_SEED);
    let mut failed = Vec::new();
    for rep in &reports {
        println!("{}", rep.summary_line());
        for c in &rep.checks {
            println!("    {} {}: {} ({})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value, c.bound);
        }
        if !rep.ok() {
            failed.push(rep.id);
        }
    }
    if reports.len() != 8 {
        eprintln!("expected 8 criteria, got {}", reports.len());
        return ExitCode::FAILURE;
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        return ExitCode::FAILURE;
    }
    println!("acceptance: all {} criteria passed", reports.len());
    ExitCode::SUCCESS
}
