// Every acceptance criterion at its stated size and tolerance, one line
// each. Criteria run concurrently; output keeps the canonical order.

use std::process::ExitCode;
use std::thread;

use mclab_core::validation::{run_criterion, Faults, Level, CRITERIA};

fn main() -> ExitCode {
    let reports: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = CRITERIA
            .iter()
            .map(|id| s.spawn(move || run_criterion(id, Level::Full, Faults::default())))
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread panicked")).collect()
    });
    let mut failed = 0;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        failed += !r.passed as usize;
        println!(
            "{tag} {:<26} metric {:.4e} (threshold {:.4e}, {:.1}s) {}",
            r.id, r.metric, r.threshold, r.seconds, r.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
