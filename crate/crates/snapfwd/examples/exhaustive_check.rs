//! Bounded-exhaustive daemon enumeration on the tiny instances: the
//! two-node graph plus the three-node path and triangle, one valid message,
//! a declared family of initial corruptions (every single-slot flag
//! injection and every next-hop table combination), all daemon choices to
//! the configured depth.
//!
//!     cargo run --release --example exhaustive_check -- [depth]

use snapfwd::verifier::explore::{explore, ExploreOutcome};
use snapfwd::Scenario;

fn scenario_text(protocol: &str, name: &str, n: usize, edges: &str, depth: u32) -> String {
    format!(
        r#"
name = "{name}-{protocol}"
protocol = "{protocol}"
[topology]
n = {n}
edges = {edges}
[workload]
send = [{{ from = 0, to = {to}, payload = "m" }}]
[check]
depth = {depth}
state_budget = 2000000
payloads = ["m", "x"]
"#,
        to = n - 1,
    )
}

fn main() {
    let depth: u32 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30);
    let cases = [
        ("pair", 2, "[[0,1]]"),
        ("path3", 3, "[[0,1],[1,2]]"),
        ("triangle3", 3, "[[0,1],[1,2],[0,2]]"),
    ];
    let mut all_ok = true;
    for protocol in ["ssmfp1", "ssmfp2"] {
        for (name, n, edges) in cases {
            let text = scenario_text(protocol, name, n, edges, depth);
            let scenario = Scenario::parse(&text, name).expect("scenario");
            let world = scenario.world();
            let roots = scenario.check_roots().expect("roots");
            let start = std::time::Instant::now();
            match explore(&world, &roots, &scenario.explore_params()) {
                Ok(ExploreOutcome::Pass { states }) => {
                    println!(
                        "{:20} pass: {} roots, {} states, {:.1}s",
                        format!("{name}-{protocol}"),
                        roots.len(),
                        states,
                        start.elapsed().as_secs_f64()
                    );
                }
                Ok(ExploreOutcome::Violation(w)) => {
                    all_ok = false;
                    println!(
                        "{:20} VIOLATION at root {}: {} - {}",
                        format!("{name}-{protocol}"),
                        w.root,
                        w.violation.kind,
                        w.violation.detail
                    );
                }
                Err(e) => {
                    all_ok = false;
                    println!("{:20} error: {e}", format!("{name}-{protocol}"));
                }
            }
        }
    }
    if !all_ok {
        std::process::exit(1);
    }
}
