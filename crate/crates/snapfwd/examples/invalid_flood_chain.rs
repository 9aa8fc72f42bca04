//! The distance-based scheme's invalid-delivery worst case: on a chain of
//! n = 2q+1 processors, preload every buffer of rank <= q+1 with a type-S
//! message destined to the middle processor. All n(q+1) invalid messages
//! end up delivered there.
//!
//!     cargo run --release --example invalid_flood_chain -- [seeds]

use snapfwd::cli::execute;
use snapfwd::{NodeId, Scenario};

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let path =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/chain_invalid.scenario");
    let scenario = Scenario::load(&path).expect("scenario");
    let middle = NodeId(2);
    let expected = 15;
    let mut ok = true;
    for seed in 0..seeds {
        let art = execute(&scenario, seed, None).expect("run");
        let delivered_middle = art.metrics.invalid_deliveries_per_dest[middle.index()];
        let pass = art.verdict.passed() && delivered_middle == expected;
        ok &= pass;
        println!(
            "seed {seed}: verdict {:?}, {} of {} invalid messages delivered to the middle, {} rounds {}",
            art.verdict,
            delivered_middle,
            expected,
            art.metrics.rounds,
            if pass { "ok" } else { "MISMATCH" }
        );
    }
    if !ok {
        std::process::exit(1);
    }
}
