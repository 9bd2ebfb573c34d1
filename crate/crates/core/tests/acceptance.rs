//! Acceptance criteria: one PASS/FAIL line each; exits nonzero if any fails.

use std::process::ExitCode;

use pkrg::suites;

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments through; honour a suite name filter
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let outcomes = if filter.is_empty() {
        suites::run_all()
    } else {
        let mut out = Vec::new();
        for name in &filter {
            match suites::run_suite(name) {
                Ok(o) => out.extend(o),
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            }
        }
        out
    };
    println!();
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).map(|o| o.criterion).collect();
    println!(
        "\nacceptance: {}/{} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
