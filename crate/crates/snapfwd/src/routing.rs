//! Self-stabilizing silent routing-table layer: hop-count Bellman-Ford with
//! estimates capped at n and smallest-id tie-breaking. One rule instance per
//! (processor, destination) entry; firing rewrites that entry to the value
//! recomputed from the neighbors' current estimates. Silent once every entry
//! is a fixed point, and the forwarding layers only ever read it through
//! `next_hop`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Configuration, RouteEntry, RoutingMode, World};
use crate::rules::{Rule, RuleInstance};
use crate::topology::NodeId;

/// Fixed-point value of entry (p, d) given the neighbors' estimates in `c`.
/// For d = p only the estimate is pinned (0); the stored next hop is kept,
/// matching its role as an arbitrary-but-stable choice.
pub fn recompute(world: &World, c: &Configuration, p: NodeId, d: NodeId) -> RouteEntry {
    let stored = c.routing[p.index()].entries[d.index()];
    if p == d {
        return RouteEntry {
            dist_est: 0,
            next_hop: stored.next_hop,
        };
    }
    let n = world.topo.n() as u16;
    let mut best: Option<(u16, NodeId)> = None;
    for &q in world.topo.neighbors(p) {
        let est = c.routing[q.index()].entries[d.index()].dist_est;
        if best.is_none_or(|(b, _)| est < b) {
            best = Some((est, q));
        }
    }
    match best {
        Some((est, q)) => RouteEntry {
            dist_est: (est.saturating_add(1)).min(n),
            next_hop: Some(q),
        },
        // One-node network: no neighbors, nothing to route.
        None => RouteEntry {
            dist_est: n,
            next_hop: None,
        },
    }
}

/// Enabled table rule at `p`: one instance when any stored entry differs
/// from its recomputation. Empty in scripted mode. The statement rewrites
/// the whole table in one firing, which is what keeps stabilization inside
/// the n-round budget a processor-granular daemon allows.
pub fn routing_enabled(world: &World, c: &Configuration, p: NodeId) -> Vec<RuleInstance> {
    if world.routing_mode == RoutingMode::Scripted {
        return Vec::new();
    }
    if is_enabled(world, c, p) {
        vec![RuleInstance {
            proc: p,
            rule: Rule::Routing,
        }]
    } else {
        Vec::new()
    }
}

pub fn is_enabled(world: &World, c: &Configuration, p: NodeId) -> bool {
    world
        .topo
        .nodes()
        .any(|d| c.routing[p.index()].entries[d.index()] != recompute(world, c, p, d))
}

/// Statement of the table rule: rewrite every entry of p's table to its
/// recomputation. Reads go against the pre-state `pre`; the writes land in
/// `post`.
pub fn apply(world: &World, pre: &Configuration, post: &mut Configuration, p: NodeId) {
    for d in world.topo.nodes() {
        post.routing[p.index()].entries[d.index()] = recompute(world, pre, p, d);
    }
}

/// Scripted repair: overwrite p's whole table with canonical values.
pub fn apply_repair(world: &World, post: &mut Configuration, p: NodeId) {
    for d in world.topo.nodes() {
        post.routing[p.index()].entries[d.index()] =
            crate::config::canonical_route_entry(&world.topo, p, d);
    }
}

/// Current next hop of p toward d, possibly wrong before stabilization.
pub fn next_hop(c: &Configuration, p: NodeId, d: NodeId) -> Option<NodeId> {
    c.routing[p.index()].entries[d.index()].next_hop
}

/// Replace a `severity` fraction of table entries with random valid-domain
/// values (next hop among the real neighbors, estimate in 0..=n).
/// Deterministic per seed.
pub fn corrupt(world: &World, c: &mut Configuration, seed: u64, severity: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = world.topo.n() as u16;
    for p in world.topo.nodes() {
        let neighbors = world.topo.neighbors(p);
        if neighbors.is_empty() {
            continue;
        }
        for d in world.topo.nodes() {
            if rng.random::<f64>() < severity {
                let nh = neighbors[rng.random_range(0..neighbors.len())];
                let est = rng.random_range(0..=n);
                c.routing[p.index()].entries[d.index()] = RouteEntry {
                    dist_est: est,
                    next_hop: Some(nh),
                };
            }
        }
    }
}

/// True when no table rule is enabled anywhere.
pub fn silent(world: &World, c: &Configuration) -> bool {
    world.topo.nodes().all(|p| routing_enabled(world, c, p).is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{canonical_tables, clean_configuration, Protocol};
    use crate::topology::{five_node_example, Topology};

    fn world(topo: Topology) -> World {
        World::new(topo, Protocol::Ssmfp1)
    }

    #[test]
    fn correct_tables_are_silent() {
        let w = world(five_node_example());
        let c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        assert!(silent(&w, &c));
    }

    #[test]
    fn two_node_corruption_fires_once() {
        let w = world(Topology::build(2, &[(0, 1)]).unwrap());
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.routing[0].entries[1].dist_est = 5;
        let enabled = routing_enabled(&w, &c, NodeId(0));
        assert_eq!(enabled.len(), 1);
        assert_eq!(enabled[0].rule, Rule::Routing);
        let pre = c.clone();
        apply(&w, &pre, &mut c, NodeId(0));
        assert_eq!(c.routing[0].entries[1].dist_est, 1);
        assert!(silent(&w, &c));
    }

    #[test]
    fn corruption_is_reproducible_and_stays_in_domain() {
        let w = world(Topology::build(3, &[(0, 1), (1, 2)]).unwrap());
        let mut c1 = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let mut c2 = clean_configuration(&w.topo, Protocol::Ssmfp1);
        corrupt(&w, &mut c1, 42, 1.0);
        corrupt(&w, &mut c2, 42, 1.0);
        assert_eq!(c1, c2);
        for p in w.topo.nodes() {
            for d in w.topo.nodes() {
                let e = c1.routing[p.index()].entries[d.index()];
                assert!(e.dist_est <= 3);
                assert!(w.topo.neighbors(p).contains(&e.next_hop.unwrap()));
            }
        }
    }

    #[test]
    fn severity_zero_is_identity() {
        let w = world(five_node_example());
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let before = c.clone();
        corrupt(&w, &mut c, 7, 0.0);
        assert_eq!(c, before);
    }

    #[test]
    fn silence_is_closed_under_repairs() {
        // Run the rule to a fixed point from a corruption, then check no
        // entry differs from its recomputation.
        let w = world(five_node_example());
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        for p in w.topo.nodes() {
            for d in w.topo.nodes() {
                c.routing[p.index()].entries[d.index()].dist_est = 0;
            }
        }
        let mut steps = 0;
        loop {
            let mut fired = false;
            for p in w.topo.nodes() {
                if !routing_enabled(&w, &c, p).is_empty() {
                    let pre = c.clone();
                    apply(&w, &pre, &mut c, p);
                    fired = true;
                }
            }
            steps += 1;
            if !fired {
                break;
            }
            assert!(steps < 1000, "did not converge");
        }
        assert!(silent(&w, &c));
        // Converged estimates equal true distances and hops are minimal.
        let canonical = canonical_tables(&w.topo);
        for p in w.topo.nodes() {
            for d in w.topo.nodes() {
                let e = c.routing[p.index()].entries[d.index()];
                assert_eq!(e.dist_est as usize, w.topo.dist(p, d));
                if p != d {
                    let nh = e.next_hop.unwrap();
                    assert_eq!(w.topo.dist(nh, d) + 1, w.topo.dist(p, d));
                    let _ = &canonical;
                }
            }
        }
    }
}
