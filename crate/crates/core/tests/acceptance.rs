//! Acceptance run: the full verification suite at the default seed, one
//! pass/fail line per criterion, nonzero exit if any criterion fails.
//!
//! Runs without the libtest harness so the lines always reach the output.

use std::process::ExitCode;
use std::time::Instant;

use abigx::verify::{run_verify, Check, VerifyConfig, CHECKS, DEFAULT_SEED};

/// Wall-clock budget for the whole suite, in seconds.
const SUITE_BUDGET: f64 = 300.0;

fn detail(check: &Check) -> String {
    let mut s = String::new();
    for m in &check.measurements {
        let mark = if m.passed { "ok" } else { "FAIL" };
        s.push_str(&format!(
            "      {:<52} {:>14.6e}  {:<20} {mark}\n",
            m.name, m.value, m.expected
        ));
    }
    if let Some(e) = &check.error {
        s.push_str(&format!("      error: {e}\n"));
    }
    s
}

fn main() -> ExitCode {
    // Single worker: the budget is stated for one process on one core's worth of work.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool");
    let start = Instant::now();
    let report = pool.install(|| {
        run_verify(&VerifyConfig {
            seed: DEFAULT_SEED,
            only: Vec::new(),
        })
    });
    let elapsed = start.elapsed().as_secs_f64();
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance: verification suite errored: {e}");
            return ExitCode::FAILURE;
        }
    };

    println!("acceptance criteria (seed {DEFAULT_SEED})");
    let mut failed = Vec::new();
    for criterion in 1..=12 {
        let ids: Vec<&str> = CHECKS.iter().filter(|c| c.1 == Some(criterion)).map(|c| c.0).collect();
        let checks: Vec<&Check> = ids.iter().filter_map(|id| report.get(id)).collect();
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        let title = CHECKS.iter().find(|c| c.1 == Some(criterion)).map_or("", |c| c.2);
        println!(
            "{} criterion {criterion:>2} [{}] {title}",
            if passed { "PASS" } else { "FAIL" },
            ids.join(",")
        );
        for c in &checks {
            print!("{}", detail(c));
        }
        if !passed {
            failed.push(criterion);
        }
    }
    let within = elapsed < SUITE_BUDGET;
    println!(
        "{} criterion 13 [suite] full verification suite on one worker: {elapsed:.2}s < {SUITE_BUDGET}s",
        if within { "PASS" } else { "FAIL" }
    );
    if !within {
        failed.push(13);
    }
    for (id, _, title) in CHECKS.iter().filter(|c| c.1.is_none()) {
        if let Some(c) = report.get(id) {
            println!(
                "{} supplementary [{id}] {title}",
                if c.passed { "PASS" } else { "FAIL" }
            );
            print!("{}", detail(c));
        }
    }

    if failed.is_empty() {
        println!("acceptance: all 13 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
