//! Acceptance criteria 1–11 on the default configuration. Prints one
//! PASS/FAIL line per criterion and fails if any criterion fails.

use frachem::config::RunConfig;
use frachem::suite::{run_suite, Suite};

fn main() {
    let base = RunConfig::default();
    base.validate().expect("default configuration is valid");
    let results = run_suite(Suite::All, &base);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
