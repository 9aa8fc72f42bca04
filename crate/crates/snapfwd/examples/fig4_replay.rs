//! Replays the bundled pinned execution (`scenarios/fig4.scenario`) under
//! its scripted daemon and prints the thirteen snapshot configurations of
//! the destination-b buffer component, exactly as the run reproduces them.
//!
//!     cargo run --example fig4_replay

use snapfwd::kernel::{run, Observer, ObserverStop, StepEvent};
use snapfwd::{Configuration, NodeId, Scenario};

/// Steps after which the snapshot states 0..12 are taken.
pub const SNAPSHOT_STEPS: [u64; 13] = [0, 1, 2, 3, 5, 6, 7, 8, 9, 10, 11, 12, 16];

struct Snapshots {
    configs: Vec<(u64, Configuration)>,
}

impl Observer for Snapshots {
    fn on_step(&mut self, ev: &StepEvent<'_>) -> Result<(), ObserverStop> {
        self.configs.push((ev.step, ev.post.clone()));
        Ok(())
    }
}

fn render(scenario: &Scenario, c: &Configuration, payloads: &snapfwd::PayloadTable) -> String {
    snapfwd::trace::render_p1_component(scenario, c, payloads, NodeId(1))
}

fn main() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig4.scenario");
    let scenario = Scenario::load(&path).expect("scenario");
    let prepared = scenario.prepare(0).expect("prepare");
    let payloads = prepared.payloads.clone();
    // Snapshot 0 is the initial configuration at its first evaluation
    // point, request bits raised by the handshake.
    let mut initial0 = prepared.initial.clone();
    snapfwd::workload::handshake_all(&prepared.world, &mut initial0);
    let mut snaps = Snapshots {
        configs: vec![(0, initial0)],
    };
    let mut daemon = prepared.daemon;
    let report = run(
        &prepared.world,
        prepared.initial,
        &mut daemon,
        &prepared.params,
        &mut snaps,
    )
    .expect("run");
    println!("outcome: {:?} after {} steps", report.outcome, report.steps);
    for (idx, &at) in SNAPSHOT_STEPS.iter().enumerate() {
        let (_, cfg) = snaps
            .configs
            .iter()
            .find(|(s, _)| *s == at)
            .expect("snapshot step");
        println!(
            "state ({idx}) - after step {at} (hash {:016x}):",
            cfg.stable_hash()
        );
        println!("{}", render(&scenario, cfg, &payloads));
    }
}
