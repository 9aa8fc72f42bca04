//! Destination-based forwarding protocol. Each destination d gets an
//! independent rule family over two buffers per processor: `bufR_p(d)` for
//! reception and `bufE_p(d)` for emission. A message is the triple
//! `(payload, lastHop, color)`; the color stamped on every move into an
//! emission buffer is what keeps distinct messages with equal payloads from
//! merging, and the choice queues keep forwarding fair.
//!
//! One reading note: the routing function has no meaningful next hop at the
//! destination itself (the per-destination buffer tree has no edge out of
//! its root), so guards treat `nextHop_d(d)` as undefined: the destination
//! is never an eligible forwarding candidate, and the stale-copy erase rule
//! treats "routes elsewhere" as vacuously true for it.

use crate::config::{Configuration, World};
use crate::message::{GhostEffect, Msg1, SlotRef};
use crate::routing::next_hop;
use crate::rules::{P1Rule, Rule, RuleInstance};
use crate::topology::NodeId;

fn buf_r(c: &Configuration, p: NodeId, d: NodeId) -> &Option<Msg1> {
    &c.proto.p1()[p.index()].buf_r[d.index()]
}

fn buf_e(c: &Configuration, p: NodeId, d: NodeId) -> &Option<Msg1> {
    &c.proto.p1()[p.index()].buf_e[d.index()]
}

fn slot_r(p: NodeId, d: NodeId) -> SlotRef {
    SlotRef::RecvFor { proc: p, dest: d }
}

fn slot_e(p: NodeId, d: NodeId) -> SlotRef {
    SlotRef::EmitFor { proc: p, dest: d }
}

/// Smallest color in `0..=Δ` absent from the neighbors' reception buffers
/// for destination d. Always exists: at most Δ neighbors, Δ+1 colors.
pub fn color_of(world: &World, c: &Configuration, p: NodeId, d: NodeId) -> u8 {
    let delta = world.topo.max_degree() as u8;
    let mut used = [false; 256];
    for &q in world.topo.neighbors(p) {
        if let Some(m) = buf_r(c, q, d) {
            used[m.color as usize] = true;
        }
    }
    (0..=delta)
        .find(|&col| !used[col as usize])
        .expect("pigeonhole: a free color always exists")
}

/// Whether candidate `x` may currently place a message into `bufR_p(d)`:
/// either a neighbor whose emission buffer routes here, or p itself with a
/// waiting message for d.
fn choice_eligible(_world: &World, c: &Configuration, p: NodeId, d: NodeId, x: NodeId) -> bool {
    if x == p {
        return c.request[p.index()]
            && c.available_send(p).is_some_and(|s| s.dest == d);
    }
    // The destination never forwards its own traffic outward.
    x != d && buf_e(c, x, d).is_some() && next_hop(c, x, d) == Some(p)
}

/// Fair choice for `bufR_p(d)`: the queue-front candidate satisfying the
/// eligibility predicate.
pub fn choice(world: &World, c: &Configuration, p: NodeId, d: NodeId) -> Option<NodeId> {
    c.proto.p1()[p.index()].queues[d.index()]
        .front_eligible(|x| choice_eligible(world, c, p, d, x))
}

fn guard_r1(world: &World, c: &Configuration, p: NodeId, d: NodeId) -> bool {
    c.request[p.index()]
        && c.available_send(p).is_some_and(|s| s.dest == d)
        && buf_r(c, p, d).is_none()
        && choice(world, c, p, d) == Some(p)
}

fn guard_r2(_world: &World, c: &Configuration, p: NodeId, d: NodeId) -> bool {
    let Some(m) = buf_r(c, p, d) else { return false };
    if buf_e(c, p, d).is_some() {
        return false;
    }
    let q = m.last_hop;
    q == p
        || !buf_e(c, q, d)
            .as_ref()
            .is_some_and(|e| e.matches_payload_color(m.payload, m.color))
}

fn guard_r3(world: &World, c: &Configuration, p: NodeId, d: NodeId) -> bool {
    buf_r(c, p, d).is_none()
        && match choice(world, c, p, d) {
            Some(s) => s != p && buf_e(c, s, d).is_some(),
            None => false,
        }
}

fn guard_r4(world: &World, c: &Configuration, p: NodeId, d: NodeId) -> bool {
    let Some(m) = buf_e(c, p, d) else { return false };
    if p == d {
        return false;
    }
    let Some(nh) = next_hop(c, p, d) else { return false };
    let copied = buf_r(c, nh, d)
        .as_ref()
        .is_some_and(|r| r.matches_full(m.payload, p, m.color));
    if !copied {
        return false;
    }
    if world.mutants.ssmfp1_r4_drop_forall_r {
        return true;
    }
    world
        .topo
        .neighbors(p)
        .iter()
        .filter(|&&r| r != nh)
        .all(|&r| {
            !buf_r(c, r, d)
                .as_ref()
                .is_some_and(|rm| rm.matches_full(m.payload, p, m.color))
        })
}

fn guard_r5(_world: &World, c: &Configuration, p: NodeId, d: NodeId) -> bool {
    let Some(m) = buf_r(c, p, d) else { return false };
    let q = m.last_hop;
    // Only copies received from a real neighbor are duplicates; a copy with
    // q = p was generated in place and stays a type-1 caterpillar whatever
    // the own emission buffer holds.
    if q == p {
        return false;
    }
    let emitter_holds_copy = buf_e(c, q, d)
        .as_ref()
        .is_some_and(|e| e.matches_payload_color(m.payload, m.color));
    if !emitter_holds_copy {
        return false;
    }
    // q = d has no outgoing route; its copies are erasable duplicates.
    q == d || next_hop(c, q, d) != Some(p)
}

fn guard_r6(c: &Configuration, p: NodeId, d: NodeId) -> bool {
    p == d && buf_e(c, p, p).is_some()
}

pub fn is_enabled(world: &World, c: &Configuration, p: NodeId, rule: P1Rule, d: NodeId) -> bool {
    match rule {
        P1Rule::R1 => guard_r1(world, c, p, d),
        P1Rule::R2 => guard_r2(world, c, p, d),
        P1Rule::R3 => guard_r3(world, c, p, d),
        P1Rule::R4 => guard_r4(world, c, p, d),
        P1Rule::R5 => guard_r5(world, c, p, d),
        P1Rule::R6 => guard_r6(c, p, d),
    }
}

/// All enabled destination-based instances at `p`, in rule order.
pub fn enabled_rules(world: &World, c: &Configuration, p: NodeId) -> Vec<RuleInstance> {
    let mut out = Vec::new();
    for rule in [
        P1Rule::R1,
        P1Rule::R2,
        P1Rule::R3,
        P1Rule::R4,
        P1Rule::R5,
        P1Rule::R6,
    ] {
        for d in world.topo.nodes() {
            if is_enabled(world, c, p, rule, d) {
                out.push(RuleInstance {
                    proc: p,
                    rule: Rule::P1 { rule, dest: d },
                });
            }
        }
    }
    out
}

/// Applies one rule statement. Guards and all reads are evaluated against
/// `pre`; writes go to `post` (only p's own state).
pub fn apply(
    world: &World,
    pre: &Configuration,
    post: &mut Configuration,
    p: NodeId,
    rule: P1Rule,
    d: NodeId,
    effects: &mut Vec<GhostEffect>,
) {
    match rule {
        P1Rule::R1 => {
            let send = *pre.available_send(p).expect("guard checked");
            let ghost = send.ghost;
            post.proto.p1_mut()[p.index()].buf_r[d.index()] = Some(Msg1 {
                payload: send.payload,
                last_hop: p,
                color: 0,
                ghost,
            });
            post.request[p.index()] = false;
            post.pending[p.index()].pop_front();
            post.proto.p1_mut()[p.index()].queues[d.index()].rotate(p);
            effects.push(GhostEffect::Generated {
                ghost,
                at: slot_r(p, d),
                dest: d,
                payload: send.payload,
            });
        }
        P1Rule::R2 => {
            let m = pre.proto.p1()[p.index()].buf_r[d.index()].expect("guard checked");
            let color = color_of(world, pre, p, d);
            post.proto.p1_mut()[p.index()].buf_e[d.index()] = Some(Msg1 {
                payload: m.payload,
                last_hop: p,
                color,
                ghost: m.ghost,
            });
            post.proto.p1_mut()[p.index()].buf_r[d.index()] = None;
            effects.push(GhostEffect::Moved {
                ghost: m.ghost,
                from: slot_r(p, d),
                to: slot_e(p, d),
            });
        }
        P1Rule::R3 => {
            let s = choice(world, pre, p, d).expect("guard checked");
            let m = pre.proto.p1()[s.index()].buf_e[d.index()].expect("guard checked");
            // The last-hop flag records the emitter we copied from; the
            // color travels unchanged.
            post.proto.p1_mut()[p.index()].buf_r[d.index()] = Some(Msg1 {
                payload: m.payload,
                last_hop: s,
                color: m.color,
                ghost: m.ghost,
            });
            post.proto.p1_mut()[p.index()].queues[d.index()].rotate(s);
            effects.push(GhostEffect::Copied {
                ghost: m.ghost,
                from: slot_e(s, d),
                to: slot_r(p, d),
            });
        }
        P1Rule::R4 => {
            let m = pre.proto.p1()[p.index()].buf_e[d.index()].expect("guard checked");
            post.proto.p1_mut()[p.index()].buf_e[d.index()] = None;
            effects.push(GhostEffect::Erased {
                ghost: m.ghost,
                at: slot_e(p, d),
            });
        }
        P1Rule::R5 => {
            let m = pre.proto.p1()[p.index()].buf_r[d.index()].expect("guard checked");
            post.proto.p1_mut()[p.index()].buf_r[d.index()] = None;
            effects.push(GhostEffect::Erased {
                ghost: m.ghost,
                at: slot_r(p, d),
            });
        }
        P1Rule::R6 => {
            let m = pre.proto.p1()[p.index()].buf_e[p.index()].expect("guard checked");
            post.proto.p1_mut()[p.index()].buf_e[p.index()] = None;
            effects.push(GhostEffect::Delivered { ghost: m.ghost, at: p });
            effects.push(GhostEffect::Erased {
                ghost: m.ghost,
                at: slot_e(p, p),
            });
        }
    }
}

/// Caterpillar taxonomy of the destination-based scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cat1 {
    /// A reception-buffer copy whose emitter no longer holds it (or that
    /// was generated in place).
    Type1 { slot: SlotRef },
    /// An emission-buffer copy not yet present at the routed successor.
    Type2 { slot: SlotRef },
    /// An emission-buffer copy together with one neighbor reception copy.
    Type3 { emit: SlotRef, recv: SlotRef },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("slot {slot} holding ghost {ghost} fits no caterpillar clause")]
pub struct Unclassifiable1 {
    pub ghost: crate::message::GhostId,
    pub slot: SlotRef,
}

/// Classifies every caterpillar containing a copy of `ghost`. An emission
/// buffer can belong to several type-3 caterpillars at once, one per
/// matching neighbor copy.
pub fn classify(
    world: &World,
    c: &Configuration,
    ghost: crate::message::GhostId,
) -> Result<Vec<Cat1>, Unclassifiable1> {
    let mut cats = Vec::new();
    for p in world.topo.nodes() {
        for d in world.topo.nodes() {
            if let Some(m) = buf_r(c, p, d) {
                if m.ghost == ghost {
                    let q = m.last_hop;
                    let emitter_match = q != p
                        && buf_e(c, q, d)
                            .as_ref()
                            .is_some_and(|e| e.matches_payload_color(m.payload, m.color));
                    if !emitter_match {
                        cats.push(Cat1::Type1 { slot: slot_r(p, d) });
                    } else {
                        // Partner pair is collected from the emitter side.
                        let partner = buf_e(c, q, d).as_ref().unwrap();
                        if partner.ghost != ghost {
                            cats.push(Cat1::Type3 {
                                emit: slot_e(q, d),
                                recv: slot_r(p, d),
                            });
                        }
                    }
                }
            }
            if let Some(m) = buf_e(c, p, d) {
                if m.ghost == ghost {
                    let mut any_type3 = false;
                    for &q in world.topo.neighbors(p) {
                        if buf_r(c, q, d)
                            .as_ref()
                            .is_some_and(|r| r.matches_full(m.payload, p, m.color))
                        {
                            any_type3 = true;
                            cats.push(Cat1::Type3 {
                                emit: slot_e(p, d),
                                recv: slot_r(q, d),
                            });
                        }
                    }
                    let successor_copy = p != d
                        && next_hop(c, p, d).is_some_and(|nh| {
                            buf_r(c, nh, d)
                                .as_ref()
                                .is_some_and(|r| r.matches_full(m.payload, p, m.color))
                        });
                    if !successor_copy {
                        cats.push(Cat1::Type2 { slot: slot_e(p, d) });
                    } else if !any_type3 {
                        return Err(Unclassifiable1 {
                            ghost,
                            slot: slot_e(p, d),
                        });
                    }
                }
            }
        }
    }
    Ok(cats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{clean_configuration, Protocol};
    use crate::message::{GhostId, Payload};
    use crate::topology::five_node_example;

    const A: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);
    const C: NodeId = NodeId(2);
    const D: NodeId = NodeId(3);

    fn world() -> World {
        World::new(five_node_example(), Protocol::Ssmfp1)
    }

    fn msg(payload: u32, last: NodeId, color: u8, ghost: GhostId) -> Msg1 {
        Msg1 {
            payload: Payload(payload),
            last_hop: last,
            color,
            ghost,
        }
    }

    #[test]
    fn color_of_smallest_free() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        // No neighbor holds anything: 0.
        assert_eq!(color_of(&w, &c, C, B), 0);
        // Neighbor reception colors {0, 2} for d = b: smallest free is 1.
        c.proto.p1_mut()[A.index()].buf_r[B.index()] = Some(msg(9, C, 0, GhostId::Invalid(0)));
        c.proto.p1_mut()[D.index()].buf_r[B.index()] = Some(msg(8, C, 2, GhostId::Invalid(1)));
        assert_eq!(color_of(&w, &c, C, B), 1);
    }

    #[test]
    fn fig4_internal_move_takes_color_one() {
        // State (1): m in bufR_c(b) color 0, invalid copy color 0 in
        // bufR_b(b). Moving m into the emission buffer picks color 1.
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[C.index()].buf_r[B.index()] = Some(msg(0, C, 0, GhostId::Valid(0)));
        c.proto.p1_mut()[B.index()].buf_r[B.index()] = Some(msg(1, C, 0, GhostId::Invalid(0)));
        assert!(is_enabled(&w, &c, C, P1Rule::R2, B));
        let pre = c.clone();
        let mut effects = Vec::new();
        apply(&w, &pre, &mut c, C, P1Rule::R2, B, &mut effects);
        let moved = c.proto.p1()[C.index()].buf_e[B.index()].unwrap();
        assert_eq!(moved.color, 1);
        assert_eq!(moved.last_hop, C);
        assert!(c.proto.p1()[C.index()].buf_r[B.index()].is_none());
    }

    #[test]
    fn copy_keeps_color_and_records_emitter() {
        // State (2): m in bufE_c(b) color 1, routing at c misdirected to a.
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[C.index()].buf_e[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        c.routing[C.index()].entries[B.index()].next_hop = Some(A);
        assert_eq!(choice(&w, &c, A, B), Some(C));
        assert!(is_enabled(&w, &c, A, P1Rule::R3, B));
        let pre = c.clone();
        let mut effects = Vec::new();
        apply(&w, &pre, &mut c, A, P1Rule::R3, B, &mut effects);
        let copy = c.proto.p1()[A.index()].buf_r[B.index()].unwrap();
        assert_eq!(copy.color, 1);
        assert_eq!(copy.last_hop, C);
        assert_eq!(copy.ghost, GhostId::Valid(0));
    }

    #[test]
    fn erase_after_forward_requires_exactly_the_successor_copy() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[C.index()].buf_e[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        // Copy sits at the routed successor b.
        c.proto.p1_mut()[B.index()].buf_r[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        assert!(is_enabled(&w, &c, C, P1Rule::R4, B));
        // A second stale copy at a blocks the erase.
        c.proto.p1_mut()[A.index()].buf_r[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        assert!(!is_enabled(&w, &c, C, P1Rule::R4, B));
        // The stale copy is erasable instead: its emitter routes to b.
        assert!(is_enabled(&w, &c, A, P1Rule::R5, B));
        // The mutant drops the all-neighbors clause and erases anyway.
        let mut wm = world();
        wm.mutants.ssmfp1_r4_drop_forall_r = true;
        assert!(is_enabled(&wm, &c, C, P1Rule::R4, B));
    }

    #[test]
    fn destination_is_not_a_forwarding_candidate() {
        // A message parked in the destination's own emission buffer must be
        // delivered there, never copied back out, whatever the stored
        // self-entry points at.
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[B.index()].buf_e[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        c.routing[B.index()].entries[B.index()].next_hop = Some(C);
        assert_eq!(choice(&w, &c, C, B), None);
        assert!(!is_enabled(&w, &c, C, P1Rule::R3, B));
        assert!(is_enabled(&w, &c, B, P1Rule::R6, B));
    }

    #[test]
    fn consumption_delivers_once_and_clears() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[B.index()].buf_e[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        let pre = c.clone();
        let mut effects = Vec::new();
        apply(&w, &pre, &mut c, B, P1Rule::R6, B, &mut effects);
        assert!(c.proto.p1()[B.index()].buf_e[B.index()].is_none());
        assert!(matches!(
            effects[0],
            GhostEffect::Delivered { at, .. } if at == B
        ));
    }

    #[test]
    fn choice_rotates_between_persistent_candidates() {
        // Two neighbors of c (a and d) persistently hold emitted messages
        // routed to c; consumptions must alternate.
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let dest = B;
        c.routing[A.index()].entries[dest.index()].next_hop = Some(C);
        c.routing[D.index()].entries[dest.index()].next_hop = Some(C);
        c.proto.p1_mut()[A.index()].buf_e[dest.index()] = Some(msg(1, A, 0, GhostId::Invalid(0)));
        c.proto.p1_mut()[D.index()].buf_e[dest.index()] = Some(msg(2, D, 0, GhostId::Invalid(1)));
        let mut picks = Vec::new();
        for _ in 0..4 {
            let s = choice(&w, &c, C, dest).unwrap();
            picks.push(s);
            c.proto.p1_mut()[C.index()].queues[dest.index()].rotate(s);
        }
        assert_eq!(picks, vec![A, D, A, D]);
    }

    #[test]
    fn persistent_candidate_bypassed_at_most_degree_times() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let dest = B;
        for x in [A, D] {
            c.routing[x.index()].entries[dest.index()].next_hop = Some(C);
            c.proto.p1_mut()[x.index()].buf_e[dest.index()] =
                Some(msg(x.0 as u32, x, 0, GhostId::Invalid(x.0 as u32)));
        }
        // d starts behind a in the queue; it must be selected within Δ
        // consumptions no matter how often a re-arms.
        let mut bypasses = 0;
        loop {
            let s = choice(&w, &c, C, dest).unwrap();
            c.proto.p1_mut()[C.index()].queues[dest.index()].rotate(s);
            if s == D {
                break;
            }
            bypasses += 1;
            assert!(bypasses <= w.topo.max_degree());
        }
    }

    #[test]
    fn classify_fresh_generation_is_type1() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[C.index()].buf_r[B.index()] = Some(msg(0, C, 0, GhostId::Valid(0)));
        let cats = classify(&w, &c, GhostId::Valid(0)).unwrap();
        assert_eq!(cats.len(), 1);
        assert!(matches!(cats[0], Cat1::Type1 { .. }));
    }

    #[test]
    fn classify_type2_and_type3() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        // Emitted at c toward b, successor copy absent: type 2.
        c.proto.p1_mut()[C.index()].buf_e[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        let cats = classify(&w, &c, GhostId::Valid(0)).unwrap();
        assert_eq!(cats, vec![Cat1::Type2 { slot: slot_e(C, B) }]);
        // Copy lands in bufR_b(b): now a single type 3.
        c.proto.p1_mut()[B.index()].buf_r[B.index()] = Some(msg(0, C, 1, GhostId::Valid(0)));
        let cats = classify(&w, &c, GhostId::Valid(0)).unwrap();
        assert_eq!(
            cats,
            vec![Cat1::Type3 {
                emit: slot_e(C, B),
                recv: slot_r(B, B)
            }]
        );
    }
}
