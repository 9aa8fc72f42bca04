//! Property-level suites: randomized runs agree with exhaustive
//! enumeration on tiny instances, and exactly-once delivery holds over
//! randomly generated graphs, workloads, and corruptions.

use proptest::prelude::*;

use snapfwd::cli::execute;
use snapfwd::verifier::explore::{explore, ExploreOutcome};
use snapfwd::Scenario;

/// Exhaustive enumeration is itself the oracle: on the two-node family the
/// verdict of 10,000 randomized weakly-fair audits must agree with the
/// exhaustive pass (and for the mutated rule set, the randomized sweep may
/// never contradict the witness the checker found).
#[test]
fn explore_agrees_with_randomized_runs_on_two_nodes() {
    for protocol in ["ssmfp1", "ssmfp2"] {
        let text = format!(
            r#"
name = "agreement"
protocol = "{protocol}"
[topology]
n = 2
edges = [[0, 1]]
[workload]
send = [{{ from = 0, to = 1, payload = "m" }}]
[corruption]
routing_severity = 1.0
inject = 2
scramble_queues = true
[check]
depth = 30
state_budget = 2000000
payloads = ["m", "x"]
"#
        );
        let scenario = Scenario::parse(&text, "agreement").unwrap();
        let world = scenario.world();
        let roots = scenario.check_roots().unwrap();
        let exhaustive_pass = matches!(
            explore(&world, &roots, &scenario.explore_params()).unwrap(),
            ExploreOutcome::Pass { .. }
        );
        assert!(exhaustive_pass, "{protocol}: exhaustive family must pass");
        let mut random_pass = true;
        for seed in 0..10_000u64 {
            let art = execute(&scenario, seed, None).expect("run");
            random_pass &= art.verdict.passed();
        }
        assert_eq!(
            exhaustive_pass, random_pass,
            "{protocol}: verdicts disagree between enumeration and 10k randomized runs"
        );
    }
}

/// Safety holds under the unfair single-processor daemon too; only
/// liveness needs weak fairness, and the biased scheduler still drains a
/// finite workload.
#[test]
fn adversarial_daemon_preserves_safety() {
    for protocol in ["ssmfp1", "ssmfp2"] {
        let text = format!(
            r#"
name = "adversarial"
protocol = "{protocol}"
[topology]
n = 3
edges = [[0,1],[1,2]]
[daemon]
kind = "adversarial"
[workload.generate]
count = 3
[corruption]
routing_severity = 1.0
inject = 6
scramble_queues = true
[budgets]
max_steps = 200000
fairness_check = false
delivery_budget = "off"
"#
        );
        let scenario = Scenario::parse(&text, "adv").unwrap();
        for seed in 0..200 {
            let art = execute(&scenario, seed, None).expect("run");
            assert!(art.verdict.passed(), "{protocol} seed {seed}: {:?}", art.verdict);
        }
    }
}

/// Staggered arrivals exercise the idle skip: with nothing enabled between
/// arrival steps the run jumps to the next scheduled send instead of
/// terminating.
#[test]
fn staggered_arrivals_deliver_and_skip_idle_gaps() {
    let text = r#"
name = "staggered"
protocol = "ssmfp1"
[topology]
n = 2
edges = [[0,1]]
[workload.generate]
count = 3
every_k = 200
"#;
    let scenario = Scenario::parse(text, "staggered").unwrap();
    let art = execute(&scenario, 3, None).expect("run");
    assert!(art.verdict.passed());
    assert_eq!(art.metrics.deliveries, 3);
    // The last send only becomes visible at step 400: the idle skip must
    // carry the step index past it without burning the step budget.
    let last_generation = art
        .metrics
        .ghosts
        .iter()
        .filter_map(|g| g.generated_step)
        .max()
        .unwrap();
    assert!(last_generation > 400, "generated at {last_generation}");
    assert!(art.metrics.steps < 50, "executed steps {}", art.metrics.steps);
}

#[test]
fn explore_state_budget_is_a_distinct_error() {
    let scenario = Scenario::parse(
        r#"
name = "tiny-budget"
protocol = "ssmfp1"
[topology]
n = 2
edges = [[0,1]]
[workload]
send = [{ from = 0, to = 1, payload = "m" }]
[check]
depth = 30
state_budget = 10
"#,
        "tiny",
    )
    .unwrap();
    let world = scenario.world();
    let roots = scenario.check_roots().unwrap();
    let err = explore(&world, &roots, &scenario.explore_params()).unwrap_err();
    assert!(err.to_string().contains("budget"), "{err}");
}

#[test]
fn synchronous_daemon_parses_and_runs() {
    let text = r#"
name = "sync"
protocol = "ssmfp2"
[topology]
n = 3
edges = [[0,1],[1,2]]
[daemon]
kind = "synchronous"
[workload]
send = [{ from = 0, to = 2, payload = "m" }]
"#;
    let scenario = Scenario::parse(text, "sync").unwrap();
    let art = execute(&scenario, 0, None).expect("run");
    assert!(art.verdict.passed());
    assert_eq!(art.metrics.deliveries, 1);
    // All-enabled-each-step makes every round exactly one step.
    assert_eq!(art.metrics.steps, art.metrics.rounds);
}

fn arbitrary_scenario() -> impl Strategy<Value = (String, u64)> {
    let graph = prop_oneof![
        Just((2usize, vec![(0u16, 1u16)])),
        Just((3, vec![(0, 1), (1, 2)])),
        Just((3, vec![(0, 1), (1, 2), (0, 2)])),
        Just((4, vec![(0, 1), (0, 2), (0, 3)])),
        Just((4, vec![(0, 1), (1, 2), (2, 3), (3, 0)])),
    ];
    (
        graph,
        prop_oneof![Just("ssmfp1"), Just("ssmfp2")],
        1u32..5,
        0u32..12,
        0.0f64..=1.0,
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(|((n, edges), protocol, sends, inject, severity, seed, scramble)| {
            let edges_text = format!(
                "[{}]",
                edges
                    .iter()
                    .map(|(a, b)| format!("[{a},{b}]"))
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let text = format!(
                r#"
name = "prop"
protocol = "{protocol}"
[topology]
n = {n}
edges = {edges_text}
[daemon]
kind = "weakly-fair"
[workload.generate]
count = {sends}
[corruption]
routing_severity = {severity}
inject = {inject}
scramble_queues = {scramble}
[budgets]
max_steps = 300000
"#
            );
            (text, seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any random small instance delivers every valid message exactly once
    /// under the weakly-fair daemon, whatever the initial corruption.
    #[test]
    fn random_scenarios_deliver_exactly_once((text, seed) in arbitrary_scenario()) {
        let scenario = Scenario::parse(&text, "prop").unwrap();
        let art = execute(&scenario, seed, None).expect("run");
        prop_assert!(
            art.verdict.passed(),
            "verdict {:?}",
            art.verdict
        );
        for g in art.metrics.ghosts.iter().filter(|g| g.valid) {
            prop_assert!(g.delivered_step.is_some());
        }
    }

    /// Replay determinism over arbitrary scenarios: one seed, one trace.
    #[test]
    fn identical_seeds_reproduce_identical_metrics((text, seed) in arbitrary_scenario()) {
        let scenario = Scenario::parse(&text, "prop").unwrap();
        let a = execute(&scenario, seed, None).expect("run");
        let b = execute(&scenario, seed, None).expect("run");
        prop_assert_eq!(a.metrics.steps, b.metrics.steps);
        prop_assert_eq!(a.metrics.rounds, b.metrics.rounds);
        prop_assert_eq!(a.metrics.deliveries, b.metrics.deliveries);
    }
}
