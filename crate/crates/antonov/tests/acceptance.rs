use std::process::ExitCode;

use antonov::acceptance::{run, AcceptanceConfig};

fn main() -> ExitCode {
    let results = run(AcceptanceConfig::default(), &[]);
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
