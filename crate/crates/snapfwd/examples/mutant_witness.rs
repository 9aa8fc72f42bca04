//! Mutation test of the verifier: weaken the destination-based
//! erase-after-forward rule by dropping its "no other neighbor holds my
//! copy" clause, then let the exhaustive checker hunt for the resulting
//! loss or duplication and print the minimized witness schedule.
//!
//!     cargo run --release --example mutant_witness

use snapfwd::scenario::instance_label;
use snapfwd::verifier::explore::{explore, minimize_witness, ExploreOutcome};
use snapfwd::Scenario;

const SCENARIO: &str = r#"
name = "mutant-hunt"
protocol = "ssmfp1"
[topology]
nodes = ["a", "b", "c"]
edges = [["a","b"], ["b","c"]]
[workload]
send = [{ from = "a", to = "c", payload = "m" }]
[check]
depth = 30
state_budget = 2000000
payloads = ["m", "x"]
[mutants]
rules = ["ssmfp1.R4:forall-r"]
"#;

fn main() {
    let scenario = Scenario::parse(SCENARIO, "mutant").expect("scenario");
    let world = scenario.world();
    let roots = scenario.check_roots().expect("roots");
    println!("hunting over {} roots...", roots.len());
    match explore(&world, &roots, &scenario.explore_params()).expect("explore") {
        ExploreOutcome::Pass { states } => {
            println!("no violation found in {states} states - the mutant survived");
            std::process::exit(1);
        }
        ExploreOutcome::Violation(w) => {
            println!(
                "violation at root {}: {} - {}",
                w.root, w.violation.kind, w.violation.detail
            );
            let (root, origins) = &roots[w.root];
            let script = minimize_witness(&world, root, origins, &w.script);
            println!("witness ({} steps, minimized from {}):", script.len(), w.script.len());
            for (i, sel) in script.iter().enumerate() {
                let labels: Vec<String> =
                    sel.iter().map(|inst| instance_label(&scenario, inst)).collect();
                println!("  step {:2}: {}", i + 1, labels.join("  "));
            }
        }
    }
}
