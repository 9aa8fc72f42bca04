//! Bounded-exhaustive daemon enumeration on tiny instances: from each
//! declared initial configuration, breadth-first over every daemon choice
//! (all nonempty subsets of enabled processors, times every enabled rule
//! per chosen processor), deduplicating states up to the step counter.
//! Reports the first loss, duplication, or misdelivery with a replayable
//! selection script.

use std::collections::{HashSet, VecDeque};

use thiserror::Error;

use crate::config::{fnv1a64, Configuration, World};
use crate::kernel;
use crate::message::{GhostEffect, GhostId};
use crate::rules::RuleInstance;
use crate::topology::NodeId;
use crate::verifier::{Violation, ViolationKind};
use crate::workload::{self, GhostOrigin};

#[derive(Debug, Clone)]
pub struct ExploreParams {
    pub depth: u32,
    pub state_budget: usize,
}

impl Default for ExploreParams {
    fn default() -> Self {
        ExploreParams {
            depth: 30,
            state_budget: 1_000_000,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExploreError {
    #[error("exhaustive checking is limited to {limit} processors, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("visited-state budget of {0} exhausted")]
    StateBudget(usize),
}

/// A found violation plus the selection script reaching it from its root.
#[derive(Debug, Clone)]
pub struct Witness {
    pub root: usize,
    pub violation: Violation,
    pub script: Vec<Vec<RuleInstance>>,
}

#[derive(Debug)]
pub enum ExploreOutcome {
    /// No violation within the depth; counts unique states seen.
    Pass { states: usize },
    Violation(Box<Witness>),
}

const PROC_LIMIT: usize = 3;

/// Mini-ledger carried through the search: per-ghost delivery counts capped
/// where further increments stop mattering.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Counts(Vec<u8>);

struct GhostIndex {
    ids: Vec<GhostId>,
    dests: Vec<NodeId>,
}

impl GhostIndex {
    fn new(origins: &[GhostOrigin]) -> Self {
        GhostIndex {
            ids: origins.iter().map(|o| o.ghost).collect(),
            dests: origins.iter().map(|o| o.dest).collect(),
        }
    }

    fn pos(&self, g: GhostId) -> Option<usize> {
        self.ids.iter().position(|&x| x == g)
    }
}

fn live_counts(world: &World, c: &Configuration, idx: &GhostIndex) -> Vec<u32> {
    let mut live = vec![0u32; idx.ids.len()];
    let bump = |live: &mut Vec<u32>, g: GhostId| {
        if let Some(i) = idx.pos(g) {
            live[i] += 1;
        }
    };
    match &c.proto {
        crate::config::ProtoState::P1(procs) => {
            for pr in procs {
                for m in pr.buf_r.iter().chain(pr.buf_e.iter()).flatten() {
                    bump(&mut live, m.ghost);
                }
            }
        }
        crate::config::ProtoState::P2(procs) => {
            for pr in procs {
                for m in pr.bufs.iter().flatten() {
                    bump(&mut live, m.ghost);
                }
            }
        }
    }
    let _ = world;
    live
}

/// Still-pending sends also count as live lineage: a valid ghost that has
/// not been generated yet is not lost.
fn pending_ghosts(c: &Configuration, idx: &GhostIndex, live: &mut [u32]) {
    for q in &c.pending {
        for s in q {
            if let Some(i) = idx.pos(s.ghost) {
                live[i] += 1;
            }
        }
    }
}

fn digest(c: &Configuration, counts: &Counts) -> (u64, u64) {
    let mut bytes = Vec::with_capacity(256);
    c.encode(&mut bytes);
    bytes.extend_from_slice(&counts.0);
    let h1 = fnv1a64(&bytes);
    // Second independent 64-bit hash: FNV with a different basis over the
    // reversed bytes.
    let mut h2: u64 = 0x6c62_272e_07bb_0142;
    for &b in bytes.iter().rev() {
        h2 ^= b as u64;
        h2 = h2.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h1, h2)
}

fn check_transition(
    idx: &GhostIndex,
    counts: &mut Counts,
    effects: &[GhostEffect],
    step: u64,
) -> Option<Violation> {
    for e in effects {
        if let GhostEffect::Delivered { ghost, at } = e {
            let Some(i) = idx.pos(*ghost) else { continue };
            counts.0[i] = counts.0[i].saturating_add(1);
            if *at != idx.dests[i] {
                return Some(Violation {
                    kind: ViolationKind::Misdelivery,
                    step,
                    detail: format!("{ghost} delivered at {at}, destined {}", idx.dests[i]),
                });
            }
            if counts.0[i] > 1 {
                return Some(Violation {
                    kind: ViolationKind::Duplication,
                    step,
                    detail: format!("{ghost} delivered twice"),
                });
            }
        }
    }
    None
}

fn check_state(
    world: &World,
    c: &Configuration,
    idx: &GhostIndex,
    counts: &Counts,
    terminal: bool,
    step: u64,
) -> Option<Violation> {
    let mut live = live_counts(world, c, idx);
    pending_ghosts(c, idx, &mut live);
    for (i, g) in idx.ids.iter().enumerate() {
        if !g.is_valid() {
            continue;
        }
        if live[i] == 0 && counts.0[i] == 0 {
            return Some(Violation {
                kind: ViolationKind::Loss,
                step,
                detail: format!("{g} erased everywhere without delivery"),
            });
        }
        if terminal && counts.0[i] != 1 {
            return Some(Violation {
                kind: if live[i] == 0 { ViolationKind::Loss } else { ViolationKind::ProgressBudget },
                step,
                detail: format!("terminal configuration with {g} delivered {} times", counts.0[i]),
            });
        }
    }
    None
}

/// All daemon choices at one configuration: nonempty processor subsets
/// crossed with one enabled rule per chosen processor.
fn selections(world: &World, enabled: &[RuleInstance]) -> Vec<Vec<RuleInstance>> {
    let mut per_proc: Vec<Vec<RuleInstance>> = Vec::new();
    for p in world.topo.nodes() {
        let group: Vec<RuleInstance> = enabled.iter().filter(|i| i.proc == p).copied().collect();
        if !group.is_empty() {
            per_proc.push(group);
        }
    }
    let k = per_proc.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << k) {
        let mut partial: Vec<Vec<RuleInstance>> = vec![Vec::new()];
        for (i, group) in per_proc.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            let mut next = Vec::with_capacity(partial.len() * group.len());
            for combo in &partial {
                for inst in group {
                    let mut c = combo.clone();
                    c.push(*inst);
                    next.push(c);
                }
            }
            partial = next;
        }
        out.extend(partial);
    }
    out
}

struct Arena {
    nodes: Vec<(u32, Vec<RuleInstance>)>,
}

impl Arena {
    fn script_to(&self, mut at: u32) -> Vec<Vec<RuleInstance>> {
        let mut rev = Vec::new();
        while at != u32::MAX {
            let (parent, sel) = &self.nodes[at as usize];
            rev.push(sel.clone());
            at = *parent;
        }
        rev.pop(); // the root has no incoming selection
        rev.reverse();
        rev
    }
}

/// Exhaustively explores each root configuration up to `params.depth`
/// steps.
pub fn explore(
    world: &World,
    roots: &[(Configuration, Vec<GhostOrigin>)],
    params: &ExploreParams,
) -> Result<ExploreOutcome, ExploreError> {
    if world.topo.n() > PROC_LIMIT {
        return Err(ExploreError::TooLarge {
            n: world.topo.n(),
            limit: PROC_LIMIT,
        });
    }
    let mut total_states = 0usize;
    for (root_idx, (root, origins)) in roots.iter().enumerate() {
        let idx = GhostIndex::new(origins);
        let mut visited: HashSet<(u64, u64)> = HashSet::new();
        let mut arena = Arena { nodes: Vec::new() };
        let mut queue: VecDeque<(Configuration, Counts, u32, u32)> = VecDeque::new();

        let mut c0 = root.clone();
        workload::handshake_all(world, &mut c0);
        let counts0 = Counts(vec![0; idx.ids.len()]);
        if let Some(v) = check_state(world, &c0, &idx, &counts0, false, 0) {
            return Ok(ExploreOutcome::Violation(Box::new(Witness {
                root: root_idx,
                violation: v,
                script: Vec::new(),
            })));
        }
        visited.insert(digest(&c0, &counts0));
        arena.nodes.push((u32::MAX, Vec::new()));
        queue.push_back((c0, counts0, 0, 0));

        while let Some((c, counts, node_id, depth)) = queue.pop_front() {
            let enabled = kernel::enabled(world, &c);
            if enabled.is_empty() {
                if let Some(v) = check_state(world, &c, &idx, &counts, true, c.step) {
                    return Ok(ExploreOutcome::Violation(Box::new(Witness {
                        root: root_idx,
                        violation: v,
                        script: arena.script_to(node_id),
                    })));
                }
                continue;
            }
            if depth >= params.depth {
                continue;
            }
            for sel in selections(world, &enabled) {
                let (mut post, effects) =
                    kernel::step(world, &c, &sel).expect("enumerated selections are enabled");
                let mut counts2 = counts.clone();
                if let Some(v) = check_transition(&idx, &mut counts2, &effects, post.step) {
                    arena.nodes.push((node_id, sel.clone()));
                    let leaf = arena.nodes.len() as u32 - 1;
                    return Ok(ExploreOutcome::Violation(Box::new(Witness {
                        root: root_idx,
                        violation: v,
                        script: arena.script_to(leaf),
                    })));
                }
                workload::handshake_all(world, &mut post);
                if let Some(v) = check_state(world, &post, &idx, &counts2, false, post.step) {
                    arena.nodes.push((node_id, sel.clone()));
                    let leaf = arena.nodes.len() as u32 - 1;
                    return Ok(ExploreOutcome::Violation(Box::new(Witness {
                        root: root_idx,
                        violation: v,
                        script: arena.script_to(leaf),
                    })));
                }
                let key = digest(&post, &counts2);
                if visited.insert(key) {
                    if visited.len() + total_states > params.state_budget {
                        return Err(ExploreError::StateBudget(params.state_budget));
                    }
                    arena.nodes.push((node_id, sel));
                    let id = arena.nodes.len() as u32 - 1;
                    queue.push_back((post, counts2, id, depth + 1));
                }
            }
        }
        total_states += visited.len();
    }
    Ok(ExploreOutcome::Pass { states: total_states })
}

/// Greedy best-effort witness shrinking: drop any step whose removal keeps
/// the script replayable and the violation reproducible.
pub fn minimize_witness(
    world: &World,
    root: &Configuration,
    origins: &[GhostOrigin],
    script: &[Vec<RuleInstance>],
) -> Vec<Vec<RuleInstance>> {
    let mut kept: Vec<Vec<RuleInstance>> = script.to_vec();
    let mut i = 0;
    while i < kept.len() {
        let mut candidate = kept.clone();
        candidate.remove(i);
        if replay_violates(world, root, origins, &candidate) {
            kept = candidate;
        } else {
            i += 1;
        }
    }
    kept
}

/// Replays a selection script and reports whether it ends in a violation.
pub fn replay_violates(
    world: &World,
    root: &Configuration,
    origins: &[GhostOrigin],
    script: &[Vec<RuleInstance>],
) -> bool {
    let idx = GhostIndex::new(origins);
    let mut c = root.clone();
    let mut counts = Counts(vec![0; idx.ids.len()]);
    for sel in script {
        workload::handshake_all(world, &mut c);
        let Ok((post, effects)) = kernel::step(world, &c, sel) else {
            return false;
        };
        if check_transition(&idx, &mut counts, &effects, post.step).is_some() {
            return true;
        }
        if check_state(world, &post, &idx, &counts, false, post.step).is_some() {
            return true;
        }
        c = post;
    }
    // Scripts may end exactly at a terminal violation.
    workload::handshake_all(world, &mut c);
    let enabled = kernel::enabled(world, &c);
    enabled.is_empty() && check_state(world, &c, &idx, &counts, true, c.step).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{clean_configuration, Protocol};
    use crate::message::{GhostId, Msg1, Payload};
    use crate::topology::Topology;

    /// Every daemon selection: nonempty processor subsets crossed with one
    /// enabled rule per chosen processor.
    #[test]
    fn selections_enumerate_subsets_times_rule_choices() {
        let topo = Topology::build(3, &[(0, 1), (1, 2)]).unwrap();
        let world = World::new(topo, Protocol::Ssmfp1);
        let mut c = clean_configuration(&world.topo, Protocol::Ssmfp1);
        // Two enabled processors: 0 with one move, 1 with two (its own move
        // for a different destination plus the delivery of an emitted
        // message addressed to it).
        c.proto.p1_mut()[0].buf_r[2] = Some(Msg1 {
            payload: Payload(0),
            last_hop: NodeId(0),
            color: 0,
            ghost: GhostId::Invalid(0),
        });
        c.proto.p1_mut()[1].buf_r[0] = Some(Msg1 {
            payload: Payload(1),
            last_hop: NodeId(1),
            color: 0,
            ghost: GhostId::Invalid(1),
        });
        c.proto.p1_mut()[1].buf_e[1] = Some(Msg1 {
            payload: Payload(2),
            last_hop: NodeId(0),
            color: 1,
            ghost: GhostId::Invalid(2),
        });
        let enabled = kernel::enabled(&world, &c);
        let procs: Vec<u16> = enabled.iter().map(|i| i.proc.0).collect();
        assert_eq!(procs, vec![0, 1, 1]);
        let sels = selections(&world, &enabled);
        // {0}: 1, {1}: 2, {0,1}: 1*2 - five distinct selections.
        assert_eq!(sels.len(), 5);
        for sel in &sels {
            let mut seen = Vec::new();
            for inst in sel {
                assert!(!seen.contains(&inst.proc));
                seen.push(inst.proc);
            }
        }
    }

    #[test]
    fn state_budget_error_is_reported() {
        let topo = Topology::build(2, &[(0, 1)]).unwrap();
        let world = World::new(topo, Protocol::Ssmfp1);
        let mut c = clean_configuration(&world.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[0].buf_r[1] = Some(Msg1 {
            payload: Payload(0),
            last_hop: NodeId(0),
            color: 0,
            ghost: GhostId::Invalid(0),
        });
        let origins = vec![crate::workload::GhostOrigin {
            ghost: GhostId::Invalid(0),
            payload: Payload(0),
            dest: NodeId(1),
            valid_source: None,
            injected_at: Some(crate::message::SlotRef::RecvFor {
                proc: NodeId(0),
                dest: NodeId(1),
            }),
        }];
        let err = explore(
            &world,
            &[(c, origins)],
            &ExploreParams {
                depth: 30,
                state_budget: 2,
            },
        )
        .unwrap_err();
        assert_eq!(err, ExploreError::StateBudget(2));
    }
}
