//! Saturation runs on the five-node example graph: continuous workload
//! toward one destination, with the windowed delivery check enabled -
//! at least one delivery per 3D rounds (destination scheme) or 3D+1 rounds
//! (distance scheme) while traffic pends.
//!
//!     cargo run --release --example saturation_throughput -- [seeds]

use snapfwd::cli::execute;
use snapfwd::Scenario;

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let mut ok = true;
    for file in ["saturation_p1.scenario", "saturation_p2.scenario"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("scenarios")
            .join(file);
        let scenario = Scenario::load(&path).expect("scenario");
        for seed in 0..seeds {
            let art = execute(&scenario, seed, None).expect("run");
            let amortized = art
                .metrics
                .amortized_rounds_per_delivery
                .map(|a| format!("{a:.2}"))
                .unwrap_or_else(|| "n/a".into());
            let pass = art.verdict.passed() && art.metrics.deliveries > 0;
            ok &= pass;
            println!(
                "{:14} seed {seed}: verdict {:?}, {} deliveries in {} rounds, amortized {amortized} rounds/delivery",
                scenario.name, art.verdict, art.metrics.deliveries, art.metrics.rounds
            );
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
