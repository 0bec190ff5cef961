//! Acceptance suite. Prints one line per criterion and fails if any
//! criterion fails. Also checks that the trace-sign mutation is caught.

use std::process::ExitCode;

use splitflow::acceptance::{run_with, spinor_identities, Mutation};

fn main() -> ExitCode {
    // `cargo test -- --list` and filters should not trigger the full suite.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    println!("acceptance suite");
    let report = run_with(None, |r| println!("{r}"));
    let mutated = spinor_identities(Some(Mutation::TraceSign));
    println!("{mutated}");
    let caught = !mutated.passed;
    println!("[{}] trace-sign mutation detected", if caught { "PASS" } else { "FAIL" });

    let failed = report.results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", report.results.len() - failed, report.results.len());
    if failed == 0 && caught {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
