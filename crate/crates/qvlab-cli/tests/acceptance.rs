//! Runs every acceptance criterion at its stated size and prints one
//! PASS/FAIL line each.
//!
//! Criteria 1, 5, 10 and 11 do not hold as stated. They are printed as FAIL; the
//! run only fails if one of them stops failing for the recorded reason, that
//! is if its supplementary statement does not hold.

use std::process::ExitCode;

use qvlab_cli::par::init_pool;
use qvlab_cli::suites::{run, Budget};

const SEED: u64 = 20_240_601;
const EXPECTED_FAIL: [u8; 4] = [1, 5, 10, 11];

fn main() -> ExitCode {
    init_pool();
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for id in 1..=16u8 {
        match run(id, SEED, Budget::FULL) {
            Ok(o) => {
                println!("{}", o.line());
                passed += usize::from(o.passed);
                let ok = if EXPECTED_FAIL.contains(&id) {
                    o.supplementary.as_ref().is_some_and(|c| c.passed)
                } else {
                    o.passed
                };
                if !ok {
                    unexpected.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:02} ERROR | {e:#}");
                unexpected.push(id);
            }
        }
    }
    println!("acceptance: {passed}/16 criteria PASS; expected FAIL: {EXPECTED_FAIL:?}");
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
