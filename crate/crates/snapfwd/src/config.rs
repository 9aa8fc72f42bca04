//! Global configuration: the product of all processor states, plus the
//! workload queues that drive the request bits. Everything a step can read
//! or write lives here; the kernel owns all mutation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::message::{Msg1, Msg2, Payload};
use crate::topology::{NodeId, Topology};

/// Which forwarding protocol a configuration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Destination-based scheme: one reception and one emission buffer per
    /// (processor, destination), color flags.
    Ssmfp1,
    /// Distance-based scheme: D+1 ranked buffers per processor with the
    /// S/A/F acknowledgment cycle.
    Ssmfp2,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Ssmfp1 => "ssmfp1",
            Protocol::Ssmfp2 => "ssmfp2",
        }
    }
}

/// How routing tables evolve during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoutingMode {
    /// The self-stabilizing table algorithm runs as rule instances with
    /// priority over forwarding.
    Managed,
    /// Tables are frozen as materialized; only scripted repair events touch
    /// them. Used for replaying pinned executions.
    Scripted,
}

/// One routing table entry: hop-count estimate (capped at n) and the next
/// hop, which always lies in the neighbor set. `None` only on a one-node
/// network, which has no neighbors at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RouteEntry {
    pub dist_est: u16,
    pub next_hop: Option<NodeId>,
}

/// Per-processor routing table, indexed by destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    pub entries: Vec<RouteEntry>,
}

/// Rotating candidate queue backing the fair choice procedures. Candidates
/// are processor ids (neighbors plus self); the selected candidate moves to
/// the back when consumed, so a persistently eligible candidate is bypassed
/// at most Δ times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairQueue {
    pub order: Vec<NodeId>,
}

impl FairQueue {
    pub fn new(order: Vec<NodeId>) -> Self {
        FairQueue { order }
    }

    /// Front-most candidate satisfying `eligible`.
    pub fn front_eligible(&self, mut eligible: impl FnMut(NodeId) -> bool) -> Option<NodeId> {
        self.order.iter().copied().find(|&c| eligible(c))
    }

    /// Move `chosen` to the back; called when a choice is consumed.
    pub fn rotate(&mut self, chosen: NodeId) {
        if let Some(i) = self.order.iter().position(|&c| c == chosen) {
            let c = self.order.remove(i);
            self.order.push(c);
        }
    }
}

/// Destination-based protocol state of one processor: per destination a
/// reception buffer, an emission buffer, and a choice queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proc1 {
    pub buf_r: Vec<Option<Msg1>>,
    pub buf_e: Vec<Option<Msg1>>,
    pub queues: Vec<FairQueue>,
}

/// Distance-based protocol state of one processor: buffers ranked 1..=D+1
/// (index 0 is rank 1) and a choice queue per rank 2..=D+1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proc2 {
    pub bufs: Vec<Option<Msg2>>,
    /// Index `i` serves rank `i + 2`.
    pub queues: Vec<FairQueue>,
}

impl Proc2 {
    pub fn buf(&self, rank: u8) -> &Option<Msg2> {
        &self.bufs[rank as usize - 1]
    }

    pub fn buf_mut(&mut self, rank: u8) -> &mut Option<Msg2> {
        &mut self.bufs[rank as usize - 1]
    }

    pub fn queue(&self, rank: u8) -> &FairQueue {
        &self.queues[rank as usize - 2]
    }

    pub fn queue_mut(&mut self, rank: u8) -> &mut FairQueue {
        &mut self.queues[rank as usize - 2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtoState {
    P1(Vec<Proc1>),
    P2(Vec<Proc2>),
}

impl ProtoState {
    pub fn p1(&self) -> &Vec<Proc1> {
        match self {
            ProtoState::P1(v) => v,
            ProtoState::P2(_) => panic!("protocol state is not ssmfp1"),
        }
    }

    pub fn p1_mut(&mut self) -> &mut Vec<Proc1> {
        match self {
            ProtoState::P1(v) => v,
            ProtoState::P2(_) => panic!("protocol state is not ssmfp1"),
        }
    }

    pub fn p2(&self) -> &Vec<Proc2> {
        match self {
            ProtoState::P2(v) => v,
            ProtoState::P1(_) => panic!("protocol state is not ssmfp2"),
        }
    }

    pub fn p2_mut(&mut self) -> &mut Vec<Proc2> {
        match self {
            ProtoState::P2(v) => v,
            ProtoState::P1(_) => panic!("protocol state is not ssmfp2"),
        }
    }
}

/// One higher-layer send waiting to be generated. The ghost identity is
/// assigned when the workload is materialized, so replays and interleaved
/// executions agree on message lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingSend {
    pub payload: Payload,
    pub dest: NodeId,
    /// Step index from which the send is visible to the request handshake.
    pub available_at: u64,
    pub ghost: crate::message::GhostId,
}

/// Full global state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    /// Monotone step index; excluded from the state hash.
    pub step: u64,
    pub routing: Vec<RoutingTable>,
    pub request: Vec<bool>,
    pub pending: Vec<VecDeque<PendingSend>>,
    pub proto: ProtoState,
}

impl Configuration {
    /// Front pending send of `p` that has already arrived.
    pub fn available_send(&self, p: NodeId) -> Option<&PendingSend> {
        self.pending[p.index()]
            .front()
            .filter(|s| s.available_at <= self.step)
    }

    /// Earliest arrival step strictly after the current step, if any send
    /// is still scheduled.
    pub fn next_arrival(&self) -> Option<u64> {
        self.pending
            .iter()
            .filter_map(|q| q.front())
            .map(|s| s.available_at)
            .filter(|&a| a > self.step)
            .min()
    }

    pub fn next_hop(&self, p: NodeId, d: NodeId) -> Option<NodeId> {
        self.routing[p.index()].entries[d.index()].next_hop
    }

    /// Canonical byte encoding of the semantic state (step index excluded).
    /// Stable across platforms; feeds both the trace hash and state-space
    /// dedup.
    pub fn encode(&self, out: &mut Vec<u8>) {
        for table in &self.routing {
            for e in &table.entries {
                out.extend_from_slice(&e.dist_est.to_le_bytes());
                push_opt_node(out, e.next_hop);
            }
        }
        for &r in &self.request {
            out.push(r as u8);
        }
        for q in &self.pending {
            out.extend_from_slice(&(q.len() as u32).to_le_bytes());
            for s in q {
                out.extend_from_slice(&s.payload.0.to_le_bytes());
                out.extend_from_slice(&s.dest.0.to_le_bytes());
                out.extend_from_slice(&s.available_at.to_le_bytes());
                push_ghost(out, s.ghost);
            }
        }
        match &self.proto {
            ProtoState::P1(procs) => {
                out.push(1);
                for pr in procs {
                    for slot in pr.buf_r.iter().chain(pr.buf_e.iter()) {
                        match slot {
                            None => out.push(0),
                            Some(m) => {
                                out.push(1);
                                out.extend_from_slice(&m.payload.0.to_le_bytes());
                                out.extend_from_slice(&m.last_hop.0.to_le_bytes());
                                out.push(m.color);
                                push_ghost(out, m.ghost);
                            }
                        }
                    }
                    for q in &pr.queues {
                        out.push(q.order.len() as u8);
                        for &c in &q.order {
                            out.extend_from_slice(&c.0.to_le_bytes());
                        }
                    }
                }
            }
            ProtoState::P2(procs) => {
                out.push(2);
                for pr in procs {
                    for slot in &pr.bufs {
                        match slot {
                            None => out.push(0),
                            Some(m) => {
                                out.push(1);
                                out.extend_from_slice(&m.payload.0.to_le_bytes());
                                out.extend_from_slice(&m.next.0.to_le_bytes());
                                out.extend_from_slice(&m.last.0.to_le_bytes());
                                out.extend_from_slice(&m.dest.0.to_le_bytes());
                                out.push(match m.kind {
                                    crate::message::AckKind::S => 0,
                                    crate::message::AckKind::A => 1,
                                    crate::message::AckKind::F => 2,
                                });
                                push_ghost(out, m.ghost);
                            }
                        }
                    }
                    for q in &pr.queues {
                        out.push(q.order.len() as u8);
                        for &c in &q.order {
                            out.extend_from_slice(&c.0.to_le_bytes());
                        }
                    }
                }
            }
        }
    }

    /// 64-bit FNV-1a over the canonical encoding.
    pub fn stable_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(256);
        self.encode(&mut bytes);
        fnv1a64(&bytes)
    }
}

fn push_opt_node(out: &mut Vec<u8>, n: Option<NodeId>) {
    match n {
        None => out.extend_from_slice(&u16::MAX.to_le_bytes()),
        Some(id) => out.extend_from_slice(&id.0.to_le_bytes()),
    }
}

fn push_ghost(out: &mut Vec<u8>, g: crate::message::GhostId) {
    match g {
        crate::message::GhostId::Valid(i) => {
            out.push(0);
            out.extend_from_slice(&i.to_le_bytes());
        }
        crate::message::GhostId::Invalid(i) => {
            out.push(1);
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Canonical fully-stabilized routing table entry for (p, d): true distance
/// and the smallest-id neighbor on a shortest path. For d = p the next hop
/// is the smallest neighbor.
pub fn canonical_route_entry(topo: &Topology, p: NodeId, d: NodeId) -> RouteEntry {
    RouteEntry {
        dist_est: topo.dist(p, d) as u16,
        next_hop: topo.canonical_next_hop(p, d),
    }
}

/// All-correct routing tables.
pub fn canonical_tables(topo: &Topology) -> Vec<RoutingTable> {
    topo.nodes()
        .map(|p| RoutingTable {
            entries: topo.nodes().map(|d| canonical_route_entry(topo, p, d)).collect(),
        })
        .collect()
}

/// Ascending candidate order for a fresh fair queue: neighbors plus self.
pub fn default_queue(topo: &Topology, p: NodeId) -> FairQueue {
    let mut order: Vec<NodeId> = topo.neighbors(p).to_vec();
    order.push(p);
    order.sort();
    FairQueue::new(order)
}

/// Empty-buffer configuration with canonical tables and no workload.
pub fn clean_configuration(topo: &Topology, protocol: Protocol) -> Configuration {
    let n = topo.n();
    let proto = match protocol {
        Protocol::Ssmfp1 => ProtoState::P1(
            topo.nodes()
                .map(|p| Proc1 {
                    buf_r: vec![None; n],
                    buf_e: vec![None; n],
                    queues: topo.nodes().map(|_| default_queue(topo, p)).collect(),
                })
                .collect(),
        ),
        Protocol::Ssmfp2 => {
            let ranks = topo.diameter() + 1;
            ProtoState::P2(
                topo.nodes()
                    .map(|p| Proc2 {
                        bufs: vec![None; ranks],
                        queues: (0..ranks.saturating_sub(1))
                            .map(|_| default_queue(topo, p))
                            .collect(),
                    })
                    .collect(),
            )
        }
    };
    Configuration {
        step: 0,
        routing: canonical_tables(topo),
        request: vec![false; n],
        pending: vec![VecDeque::new(); n],
        proto,
    }
}

/// Static per-run data shared by guards, daemons, and the verifier.
#[derive(Debug, Clone)]
pub struct World {
    pub topo: Topology,
    pub protocol: Protocol,
    pub routing_mode: RoutingMode,
    pub mutants: crate::rules::MutantSet,
}

impl World {
    pub fn new(topo: Topology, protocol: Protocol) -> Self {
        World {
            topo,
            protocol,
            routing_mode: RoutingMode::Managed,
            mutants: Default::default(),
        }
    }

    /// Number of ranked buffers per processor in the distance-based scheme.
    pub fn rank_count(&self) -> u8 {
        (self.topo.diameter() + 1) as u8
    }
}
