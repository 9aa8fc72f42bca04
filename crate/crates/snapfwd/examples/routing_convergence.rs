//! Measures the routing layer's stabilization: from random full-table
//! corruptions, rounds until the table rules fall silent, and an exact
//! comparison of the converged next hops against a breadth-first-search
//! oracle.
//!
//!     cargo run --release --example routing_convergence -- [seeds-per-graph]

use snapfwd::config::{canonical_tables, clean_configuration};
use snapfwd::kernel::{run, Daemon, DaemonPolicy, NullObserver, RunParams};
use snapfwd::{routing, Protocol, RunOutcome, Topology, World};

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let graphs: [(&str, usize, Vec<(u16, u16)>); 5] = [
        ("pair", 2, vec![(0, 1)]),
        ("path3", 3, vec![(0, 1), (1, 2)]),
        ("star4", 4, vec![(0, 1), (0, 2), (0, 3)]),
        ("fig1", 5, vec![(0, 2), (1, 2), (2, 3), (3, 4)]),
        ("path6", 6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]),
    ];
    let mut worst_overall = 0;
    let mut ok = true;
    for (name, n, edges) in graphs {
        let topo = Topology::build(n, &edges).unwrap();
        let world = World::new(topo.clone(), Protocol::Ssmfp1);
        let mut worst = 0u64;
        for seed in 0..seeds {
            let mut c = clean_configuration(&topo, Protocol::Ssmfp1);
            routing::corrupt(&world, &mut c, seed, 1.0);
            let mut daemon = Daemon::new(
                DaemonPolicy::WeaklyFair {
                    seed,
                    bound: 2 * n as u32,
                },
                n,
            );
            let report = run(
                &world,
                c,
                &mut daemon,
                &RunParams::default(),
                &mut NullObserver,
            )
            .unwrap();
            assert_eq!(report.outcome, RunOutcome::Terminal);
            assert!(
                routing::silent(&world, &report.final_config),
                "not silent at terminal"
            );
            // The oracle pins distances everywhere and next hops on real
            // paths; the self entry's hop is an arbitrary stable choice.
            let oracle = canonical_tables(&topo);
            for p in topo.nodes() {
                for d in topo.nodes() {
                    let got = report.final_config.routing[p.index()].entries[d.index()];
                    let want = oracle[p.index()].entries[d.index()];
                    let matches =
                        got.dist_est == want.dist_est && (p == d || got.next_hop == want.next_hop);
                    if !matches {
                        println!("{name} seed {seed}: entry ({p},{d}) diverges from the oracle");
                        ok = false;
                    }
                }
            }
            worst = worst.max(report.rounds);
        }
        worst_overall = worst_overall.max(worst);
        let within = worst <= n as u64;
        ok &= within;
        println!(
            "{name:8} n={n}: worst silence over {seeds} corruptions = {worst} rounds (bound {n}) {}",
            if within { "ok" } else { "EXCEEDED" }
        );
    }
    if !ok {
        std::process::exit(1);
    }
    let _ = worst_overall;
}
