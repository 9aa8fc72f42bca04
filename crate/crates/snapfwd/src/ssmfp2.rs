//! Distance-based forwarding protocol. Every processor owns buffers ranked
//! 1..=D+1; a generated message starts at rank 1 with type S and each copy
//! lands one rank higher at the next processor, so the buffer graph is
//! acyclic by construction. Delivery flips the head copy to type A, a copy
//! stranded at the top rank flips to F, and either acknowledgment walks back
//! down the income path: A lets buffers free themselves, F makes the rank-1
//! sink re-emit through the repaired tables. Copies of one message chain
//! into a "caterpillar" via their next/last fields; correction rules erase
//! the tails of chains that only exist because of the initial configuration.
//!
//! The acknowledgment set in the type-propagation rule is {F, A}: these are
//! the two acknowledgment values in the message alphabet, and every other
//! rule treats them as the pair.

use crate::config::{Configuration, World};
use crate::message::{AckKind, GhostEffect, Msg2, SlotRef};
use crate::routing::next_hop;
use crate::rules::{P2Rule, Rule, RuleInstance};
use crate::topology::NodeId;

fn buf(c: &Configuration, p: NodeId, rank: u8) -> &Option<Msg2> {
    c.proto.p2()[p.index()].buf(rank)
}

fn slot(p: NodeId, rank: u8) -> SlotRef {
    SlotRef::Ranked { proc: p, rank }
}

fn is_ack(k: AckKind) -> bool {
    matches!(k, AckKind::F | AckKind::A)
}

/// Fair choice for `buf_p(rank)`, ranks 2..=D+1: the queue-front neighbor
/// holding a type-S message routed here that has not already reached its
/// destination.
pub fn choice(world: &World, c: &Configuration, p: NodeId, rank: u8) -> Option<NodeId> {
    let _ = world;
    c.proto.p2()[p.index()].queue(rank).front_eligible(|x| {
        x != p
            && buf(c, x, rank - 1)
                .as_ref()
                .is_some_and(|m| m.next == p && m.kind == AckKind::S && x != m.dest)
    })
}

pub fn is_enabled(world: &World, c: &Configuration, p: NodeId, rule: P2Rule, rank: u8) -> bool {
    let top = world.rank_count();
    if rank == 0 || rank > top {
        return false;
    }
    let m = buf(c, p, rank);
    match rule {
        P2Rule::R1 => {
            rank == 1
                && c.request[p.index()]
                && m.is_none()
                && match c.available_send(p) {
                    Some(send) => match next_hop(c, p, send.dest) {
                        Some(nh) => {
                            top >= 2
                                && !buf(c, nh, 2).as_ref().is_some_and(|b| {
                                    b.matches_from(send.payload, p, send.dest, None)
                                })
                        }
                        None => false,
                    },
                    None => false,
                }
        }
        P2Rule::R2 | P2Rule::R3 => {
            let want = if rule == P2Rule::R2 { AckKind::F } else { AckKind::A };
            rank == 1
                && m.as_ref().is_some_and(|b| {
                    b.kind == want
                        && b.dest != p
                        && (top < 2
                            || !buf(c, b.next, 2)
                                .as_ref()
                                .is_some_and(|s| s.matches_from(b.payload, p, b.dest, Some(want))))
                })
        }
        P2Rule::R4 => rank == 1 && m.as_ref().is_some_and(|b| b.dest == p && b.kind == AckKind::S),
        P2Rule::R5 => rank == 1 && m.as_ref().is_some_and(|b| b.dest == p && b.kind == AckKind::A),
        P2Rule::R6 => rank == 1 && m.as_ref().is_some_and(|b| b.dest == p && b.kind == AckKind::F),
        P2Rule::R7 => {
            rank < top
                && m.as_ref().is_some_and(|b| {
                    b.kind == AckKind::S
                        && b.dest != p
                        && buf(c, b.next, rank + 1).as_ref().is_some_and(|s| {
                            s.matches_from(b.payload, p, b.dest, None) && is_ack(s.kind)
                        })
                })
        }
        P2Rule::R8 => {
            (2..top).contains(&rank)
                && m.is_none()
                && match choice(world, c, p, rank) {
                    Some(s) => {
                        let src = buf(c, s, rank - 1).as_ref().expect("eligible");
                        match next_hop(c, p, src.dest) {
                            Some(nh) => !buf(c, nh, rank + 1)
                                .as_ref()
                                .is_some_and(|b| b.matches_from(src.payload, p, src.dest, None)),
                            None => false,
                        }
                    }
                    None => false,
                }
        }
        P2Rule::R9 => {
            (2..top).contains(&rank)
                && m.as_ref().is_some_and(|b| {
                    is_ack(b.kind)
                        && b.dest != p
                        && buf(c, b.last, rank - 1)
                            .as_ref()
                            .is_some_and(|lo| lo.matches_toward(b.payload, p, b.dest, Some(b.kind)))
                        && !buf(c, b.next, rank + 1)
                            .as_ref()
                            .is_some_and(|hi| hi.matches_from(b.payload, p, b.dest, Some(b.kind)))
                })
        }
        P2Rule::R10 => {
            (2..=top).contains(&rank)
                && m.as_ref().is_some_and(|b| b.dest == p && b.kind == AckKind::S)
        }
        P2Rule::R11 => {
            (2..=top).contains(&rank)
                && m.as_ref().is_some_and(|b| {
                    b.dest == p
                        && is_ack(b.kind)
                        && buf(c, b.last, rank - 1)
                            .as_ref()
                            .is_some_and(|lo| lo.matches_toward(b.payload, p, p, Some(b.kind)))
                })
        }
        P2Rule::R12 => {
            rank == top
                && top >= 2
                && m.is_none()
                && match choice(world, c, p, rank) {
                    Some(s) => {
                        let src = buf(c, s, rank - 1).as_ref().expect("eligible");
                        next_hop(c, p, src.dest).is_some()
                    }
                    None => false,
                }
        }
        P2Rule::R13 => {
            rank == top
                && top >= 2
                && m.as_ref().is_some_and(|b| b.kind == AckKind::S && b.dest != p)
        }
        P2Rule::R14 => {
            rank == top
                && top >= 2
                && m.as_ref().is_some_and(|b| {
                    is_ack(b.kind)
                        && b.dest != p
                        && buf(c, b.last, rank - 1)
                            .as_ref()
                            .is_some_and(|lo| lo.matches_toward(b.payload, p, b.dest, Some(b.kind)))
                })
        }
        P2Rule::R15 | P2Rule::R16 => {
            if !(2..top).contains(&rank) {
                return false;
            }
            let Some(b) = m.as_ref() else { return false };
            if !is_ack(b.kind) {
                return false;
            }
            let succ_matches = buf(c, b.next, rank + 1)
                .as_ref()
                .is_some_and(|hi| hi.matches_from(b.payload, p, b.dest, Some(b.kind)));
            if succ_matches {
                return false;
            }
            let pred = buf(c, b.last, rank - 1)
                .as_ref()
                .filter(|lo| lo.matches_toward(b.payload, p, b.dest, None));
            match rule {
                P2Rule::R15 => pred.is_none(),
                _ => pred.is_some_and(|lo| {
                    (is_ack(lo.kind) && lo.kind != b.kind) || b.last == b.dest
                }),
            }
        }
        P2Rule::R17 | P2Rule::R18 => {
            if rank != top || top < 2 {
                return false;
            }
            let Some(b) = m.as_ref() else { return false };
            if !is_ack(b.kind) {
                return false;
            }
            let pred = buf(c, b.last, rank - 1)
                .as_ref()
                .filter(|lo| lo.matches_toward(b.payload, p, b.dest, None));
            match rule {
                P2Rule::R17 => pred.is_none(),
                _ => pred.is_some_and(|lo| {
                    (is_ack(lo.kind) && lo.kind != b.kind) || b.last == b.dest
                }),
            }
        }
    }
}

/// Rank range a rule quantifies over; fixed-rank rules yield one entry.
fn rank_range(rule: P2Rule, top: u8) -> std::ops::RangeInclusive<u8> {
    match rule {
        P2Rule::R1 | P2Rule::R2 | P2Rule::R3 | P2Rule::R4 | P2Rule::R5 | P2Rule::R6 => 1..=1,
        P2Rule::R7 => 1..=top.saturating_sub(1),
        P2Rule::R8 | P2Rule::R9 | P2Rule::R15 | P2Rule::R16 => 2..=top.saturating_sub(1),
        P2Rule::R10 | P2Rule::R11 => 2..=top,
        P2Rule::R12 | P2Rule::R13 | P2Rule::R14 | P2Rule::R17 | P2Rule::R18 => top..=top,
    }
}

pub const ALL_RULES: [P2Rule; 18] = [
    P2Rule::R1,
    P2Rule::R2,
    P2Rule::R3,
    P2Rule::R4,
    P2Rule::R5,
    P2Rule::R6,
    P2Rule::R7,
    P2Rule::R8,
    P2Rule::R9,
    P2Rule::R10,
    P2Rule::R11,
    P2Rule::R12,
    P2Rule::R13,
    P2Rule::R14,
    P2Rule::R15,
    P2Rule::R16,
    P2Rule::R17,
    P2Rule::R18,
];

/// All enabled distance-based instances at `p`, one per qualifying rank.
pub fn enabled_rules(world: &World, c: &Configuration, p: NodeId) -> Vec<RuleInstance> {
    let top = world.rank_count();
    let mut out = Vec::new();
    for rule in ALL_RULES {
        for rank in rank_range(rule, top) {
            if rank >= 1 && is_enabled(world, c, p, rule, rank) {
                out.push(RuleInstance {
                    proc: p,
                    rule: Rule::P2 { rule, rank },
                });
            }
        }
    }
    out
}

pub fn apply(
    world: &World,
    pre: &Configuration,
    post: &mut Configuration,
    p: NodeId,
    rule: P2Rule,
    rank: u8,
    effects: &mut Vec<GhostEffect>,
) {
    match rule {
        P2Rule::R1 => {
            let send = *pre.available_send(p).expect("guard checked");
            let nh = next_hop(pre, p, send.dest).expect("guard checked");
            let ghost = send.ghost;
            let last = world.topo.smallest_neighbor(p).expect("guard checked");
            *post.proto.p2_mut()[p.index()].buf_mut(1) = Some(Msg2 {
                payload: send.payload,
                next: nh,
                last,
                dest: send.dest,
                kind: AckKind::S,
                ghost,
            });
            post.request[p.index()] = false;
            post.pending[p.index()].pop_front();
            effects.push(GhostEffect::Generated {
                ghost,
                at: slot(p, 1),
                dest: send.dest,
                payload: send.payload,
            });
        }
        P2Rule::R2 => {
            let m = pre.proto.p2()[p.index()].buf(1).expect("guard checked");
            let nh = next_hop(pre, p, m.dest).expect("connected");
            let b = post.proto.p2_mut()[p.index()].buf_mut(1).as_mut().unwrap();
            b.next = nh;
            b.kind = AckKind::S;
        }
        P2Rule::R3 | P2Rule::R5 => {
            let m = pre.proto.p2()[p.index()].buf(1).expect("guard checked");
            *post.proto.p2_mut()[p.index()].buf_mut(1) = None;
            effects.push(GhostEffect::Erased {
                ghost: m.ghost,
                at: slot(p, 1),
            });
        }
        P2Rule::R4 => {
            let m = pre.proto.p2()[p.index()].buf(1).expect("guard checked");
            post.proto.p2_mut()[p.index()].buf_mut(1).as_mut().unwrap().kind = AckKind::A;
            effects.push(GhostEffect::Delivered { ghost: m.ghost, at: p });
        }
        P2Rule::R6 => {
            post.proto.p2_mut()[p.index()].buf_mut(1).as_mut().unwrap().kind = AckKind::S;
        }
        P2Rule::R7 => {
            let m = pre.proto.p2()[p.index()].buf(rank).expect("guard checked");
            let ack = buf(pre, m.next, rank + 1).as_ref().expect("guard checked").kind;
            post.proto.p2_mut()[p.index()].buf_mut(rank).as_mut().unwrap().kind = ack;
        }
        P2Rule::R8 | P2Rule::R12 => {
            let s = choice(world, pre, p, rank).expect("guard checked");
            let src = buf(pre, s, rank - 1).expect("guard checked");
            let nh = next_hop(pre, p, src.dest).expect("guard checked");
            *post.proto.p2_mut()[p.index()].buf_mut(rank) = Some(Msg2 {
                payload: src.payload,
                next: nh,
                last: s,
                dest: src.dest,
                kind: AckKind::S,
                ghost: src.ghost,
            });
            post.proto.p2_mut()[p.index()].queue_mut(rank).rotate(s);
            effects.push(GhostEffect::Copied {
                ghost: src.ghost,
                from: slot(s, rank - 1),
                to: slot(p, rank),
            });
        }
        P2Rule::R9 | P2Rule::R11 | P2Rule::R14 | P2Rule::R15 | P2Rule::R16 | P2Rule::R17
        | P2Rule::R18 => {
            let m = pre.proto.p2()[p.index()].buf(rank).expect("guard checked");
            *post.proto.p2_mut()[p.index()].buf_mut(rank) = None;
            effects.push(GhostEffect::Erased {
                ghost: m.ghost,
                at: slot(p, rank),
            });
        }
        P2Rule::R10 => {
            let m = pre.proto.p2()[p.index()].buf(rank).expect("guard checked");
            post.proto.p2_mut()[p.index()].buf_mut(rank).as_mut().unwrap().kind = AckKind::A;
            effects.push(GhostEffect::Delivered { ghost: m.ghost, at: p });
        }
        P2Rule::R13 => {
            post.proto.p2_mut()[p.index()].buf_mut(rank).as_mut().unwrap().kind = AckKind::F;
        }
    }
}

/// One caterpillar: carrier buffers at consecutive ranks linked by their
/// next/last fields, typed S with a uniform A or F suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cat2 {
    /// (processor, rank) carriers from tail to head.
    pub carriers: Vec<(NodeId, u8)>,
    /// Tail sits at rank 1.
    pub normal: bool,
    pub kind: AckKind,
}

impl Cat2 {
    pub fn len(&self) -> usize {
        self.carriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carriers.is_empty()
    }

    pub fn head(&self) -> (NodeId, u8) {
        *self.carriers.last().unwrap()
    }

    pub fn tail(&self) -> (NodeId, u8) {
        *self.carriers.first().unwrap()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("slot {slot} holds a flag outside its domain")]
pub struct Unclassifiable2 {
    pub slot: SlotRef,
}

/// Whether buffers (lo at `rank`) and (hi at `rank+1`) chain: mutual
/// next/last pointers, same payload and destination, and the lower carrier
/// is neither the destination nor its own successor.
fn links(lo: &Msg2, lo_proc: NodeId, hi: &Msg2, hi_proc: NodeId) -> bool {
    lo.next == hi_proc
        && hi.last == lo_proc
        && lo.payload == hi.payload
        && lo.dest == hi.dest
        && lo_proc != lo.dest
        && lo_proc != hi_proc
}

/// Splits a linked run of types into maximal well-typed caterpillar
/// segments: S* followed by A* or F*.
fn segment_types(kinds: &[AckKind]) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    let mut start = 0;
    let mut suffix: Option<AckKind> = None;
    for (i, &k) in kinds.iter().enumerate() {
        match (suffix, k) {
            (_, AckKind::S) if suffix.is_some() => {
                segs.push((start, i));
                start = i;
                suffix = None;
            }
            (None, AckKind::S) => {}
            (None, ack) => suffix = Some(ack),
            (Some(cur), ack) if ack == cur => {}
            (Some(_), ack) => {
                segs.push((start, i));
                start = i;
                suffix = Some(ack);
            }
        }
    }
    segs.push((start, kinds.len()));
    segs
}

/// Every maximal caterpillar carrying a copy of `ghost`.
pub fn classify(
    world: &World,
    c: &Configuration,
    ghost: crate::message::GhostId,
) -> Result<Vec<Cat2>, Unclassifiable2> {
    let top = world.rank_count();
    let mut out = Vec::new();
    let mut claimed: Vec<(NodeId, u8)> = Vec::new();
    for p in world.topo.nodes() {
        for rank in 1..=top {
            let Some(m) = buf(c, p, rank) else { continue };
            if m.ghost != ghost || claimed.contains(&(p, rank)) {
                continue;
            }
            if !world.topo.are_neighbors(p, m.next) || !world.topo.are_neighbors(p, m.last) {
                return Err(Unclassifiable2 { slot: slot(p, rank) });
            }
            // Walk down to the chain's tail, then up to its head.
            let mut lo_proc = p;
            let mut lo_rank = rank;
            loop {
                if lo_rank == 1 {
                    break;
                }
                let lo = buf(c, lo_proc, lo_rank).as_ref().unwrap();
                let below = buf(c, lo.last, lo_rank - 1);
                match below.as_ref() {
                    Some(b) if links(b, lo.last, lo, lo_proc) => {
                        lo_proc = lo.last;
                        lo_rank -= 1;
                    }
                    _ => break,
                }
            }
            let mut run = vec![(lo_proc, lo_rank)];
            let mut kinds = vec![buf(c, lo_proc, lo_rank).as_ref().unwrap().kind];
            let (mut hi_proc, mut hi_rank) = (lo_proc, lo_rank);
            while hi_rank < top {
                let hi = buf(c, hi_proc, hi_rank).as_ref().unwrap();
                let above = buf(c, hi.next, hi_rank + 1);
                match above.as_ref() {
                    Some(a) if links(hi, hi_proc, a, hi.next) => {
                        hi_proc = hi.next;
                        hi_rank += 1;
                        run.push((hi_proc, hi_rank));
                        kinds.push(a.kind);
                    }
                    _ => break,
                }
            }
            for (s, e) in segment_types(&kinds) {
                let carriers: Vec<(NodeId, u8)> = run[s..e].to_vec();
                let seg_has_ghost = carriers
                    .iter()
                    .any(|&(q, r)| buf(c, q, r).as_ref().unwrap().ghost == ghost);
                for &slot in &carriers {
                    if buf(c, slot.0, slot.1).as_ref().unwrap().ghost == ghost {
                        claimed.push(slot);
                    }
                }
                if !seg_has_ghost {
                    continue;
                }
                let seg_kinds = &kinds[s..e];
                let kind = seg_kinds
                    .iter()
                    .copied()
                    .find(|k| *k != AckKind::S)
                    .unwrap_or(AckKind::S);
                out.push(Cat2 {
                    normal: carriers[0].1 == 1,
                    kind,
                    carriers,
                });
            }
        }
    }
    Ok(out)
}
