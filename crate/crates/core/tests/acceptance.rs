//! One pass/fail line per acceptance criterion. Run with
//! `cargo test -p kglab-core --release --test acceptance`; an optional
//! argument list of criterion numbers restricts the run.

use std::process::ExitCode;
use std::time::Instant;

use kglab_core::criteria::{Suite, TITLES};

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<usize> = if picked.is_empty() { (1..=TITLES.len()).collect() } else { picked };
    let suite = Suite::new();
    let mut failed = 0;
    for id in ids {
        let start = Instant::now();
        let o = suite.evaluate(id);
        println!("{} [{:.1}s]", o.line(), start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
