//! Runs every acceptance criterion against the calibrated defaults and
//! prints one line per criterion; exits non-zero if any fails.

use memsyn::acceptance::run_all;
use memsyn::DeviceParams;

fn main() {
    let outcomes = run_all(&DeviceParams::default());
    for o in &outcomes {
        println!("{o}");
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed} of {} criteria passed", outcomes.len());
    if outcomes.len() != 12 || passed != outcomes.len() {
        std::process::exit(1);
    }
}
