//! Seed sweep over both forwarding protocols on a family of small graphs,
//! with fully corrupted routing tables, scrambled choice queues, and a
//! flood of injected invalid messages. Every run is audited for
//! exactly-once delivery of the valid messages.
//!
//!     cargo run --release --example sweep_protocols -- [seeds-per-graph]

use snapfwd::cli::sweep;
use snapfwd::Scenario;

fn scenario_text(protocol: &str, name: &str, edges: &str, n: usize, inject: usize) -> String {
    format!(
        r#"
name = "{name}-{protocol}"
protocol = "{protocol}"
[topology]
n = {n}
edges = {edges}
[daemon]
kind = "weakly-fair"
[workload.generate]
count = 4
[corruption]
routing_severity = 1.0
inject = {inject}
scramble_queues = true
[budgets]
max_steps = 400000
"#
    )
}

fn main() {
    let per_graph: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    // n in 2..=6 with the five-node example graph included; the last
    // column is the diameter, sizing the invalid-message flood at n(D+1).
    let graphs = [
        ("pair", 2, "[[0,1]]", 1),
        ("path3", 3, "[[0,1],[1,2]]", 2),
        ("star4", 4, "[[0,1],[0,2],[0,3]]", 2),
        ("fig1", 5, "[[0,2],[1,2],[2,3],[3,4]]", 3),
        ("path6", 6, "[[0,1],[1,2],[2,3],[3,4],[4,5]]", 5),
    ];
    let mut all_ok = true;
    for protocol in ["ssmfp1", "ssmfp2"] {
        for (name, n, edges, diameter) in graphs {
            let inject = n * (diameter + 1);
            let text = scenario_text(protocol, name, edges, n, inject);
            let scenario = Scenario::parse(&text, name).expect("scenario");
            let outcome = sweep(&scenario, 0..per_graph, None).expect("sweep");
            let ok = outcome.failures.is_empty() && outcome.budget_hits == 0;
            all_ok &= ok;
            println!(
                "{:18} {} runs: {} violations, {} budget hits, worst invalid/dest {}, worst rounds-to-delivery {}",
                format!("{name}-{protocol}"),
                outcome.runs,
                outcome.failures.len(),
                outcome.budget_hits,
                outcome.max_invalid_per_dest,
                outcome.max_rounds_to_delivery,
            );
            for f in outcome.failures.iter().take(2) {
                if let snapfwd::Verdict::Violation(v) = &f.verdict {
                    println!("    seed {}: step {}: {} - {}", f.seed, v.step, v.kind, v.detail);
                }
            }
        }
    }
    if !all_ok {
        std::process::exit(1);
    }
}
