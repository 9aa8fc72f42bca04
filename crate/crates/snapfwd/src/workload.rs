//! Scenario inputs: higher-layer send queues driving the request bits, and
//! arbitrary initial configurations including invalid messages. All draws
//! are deterministic per seed; routing corruption, buffer injection, queue
//! scrambling, and workload generation use separate ChaCha streams so one
//! knob never shifts another's draws.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{clean_configuration, Configuration, PendingSend, Protocol, World};
use crate::message::{AckKind, GhostId, Msg1, Msg2, Payload, PayloadTable, SlotRef};
use crate::routing;
use crate::topology::NodeId;

const STREAM_ROUTING: u64 = 0;
const STREAM_BUFFERS: u64 = 1;
const STREAM_QUEUES: u64 = 2;
pub const STREAM_WORKLOAD: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One declared higher-layer send.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendSpec {
    pub from: NodeId,
    pub dest: NodeId,
    pub payload: Payload,
    pub available_at: u64,
}

#[derive(Debug, Clone, Default)]
pub struct WorkloadSpec {
    pub sends: Vec<SendSpec>,
}

/// Explicitly placed invalid message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    P1 {
        proc: NodeId,
        emission: bool,
        dest: NodeId,
        payload: Payload,
        last_hop: NodeId,
        color: u8,
    },
    P2 {
        proc: NodeId,
        rank: u8,
        payload: Payload,
        next: NodeId,
        last: NodeId,
        dest: NodeId,
        kind: AckKind,
    },
}

#[derive(Debug, Clone, Default)]
pub struct CorruptionSpec {
    pub seed: u64,
    pub routing_severity: f64,
    /// Number of randomly injected invalid messages (drawn over empty slots
    /// without replacement).
    pub inject: u32,
    /// Restrict random injections to these ranks (distance-based scheme).
    pub rank_domain: Option<Vec<u8>>,
    pub scramble_queues: bool,
    pub placements: Vec<Placement>,
}

/// Ledger seed: one record per message known at materialization time.
#[derive(Debug, Clone)]
pub struct GhostOrigin {
    pub ghost: GhostId,
    pub payload: Payload,
    pub dest: NodeId,
    /// Generation site for valid ghosts, injection slot for invalid ones.
    pub valid_source: Option<NodeId>,
    pub injected_at: Option<SlotRef>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MaterializeError {
    #[error("send from {0} to itself is excluded from workloads")]
    SelfSend(NodeId),
    #[error("placement flag out of domain: {0}")]
    BadPlacement(String),
    #[error("placement targets occupied slot {0}")]
    SlotOccupied(SlotRef),
    #[error("severity {0} outside [0, 1]")]
    BadSeverity(f64),
}

/// Builds the initial configuration: clean state, then routing corruption,
/// explicit placements, random injections, and queue scrambling, in that
/// order. Returns the ledger seeds alongside.
pub fn materialize(
    world: &World,
    workload: &WorkloadSpec,
    corruption: &CorruptionSpec,
    payloads: &mut PayloadTable,
) -> Result<(Configuration, Vec<GhostOrigin>), MaterializeError> {
    if !(0.0..=1.0).contains(&corruption.routing_severity) {
        return Err(MaterializeError::BadSeverity(corruption.routing_severity));
    }
    let mut c = clean_configuration(&world.topo, world.protocol);
    let mut origins = Vec::new();

    for (i, send) in workload.sends.iter().enumerate() {
        if send.from == send.dest {
            return Err(MaterializeError::SelfSend(send.from));
        }
        let ghost = GhostId::Valid(i as u32);
        c.pending[send.from.index()].push_back(PendingSend {
            payload: send.payload,
            dest: send.dest,
            available_at: send.available_at,
            ghost,
        });
        origins.push(GhostOrigin {
            ghost,
            payload: send.payload,
            dest: send.dest,
            valid_source: Some(send.from),
            injected_at: None,
        });
    }

    if corruption.routing_severity > 0.0 {
        routing::corrupt(world, &mut c, stream_seed(corruption.seed, STREAM_ROUTING), corruption.routing_severity);
    }

    let mut invalid_idx = 0u32;
    for placement in &corruption.placements {
        place(world, &mut c, *placement, GhostId::Invalid(invalid_idx), &mut origins)?;
        invalid_idx += 1;
    }

    if corruption.inject > 0 {
        let mut rng = stream_rng(corruption.seed, STREAM_BUFFERS);
        inject_random(
            world,
            &mut c,
            corruption,
            &mut rng,
            &mut invalid_idx,
            payloads,
            &mut origins,
        );
    }

    if corruption.scramble_queues {
        let mut rng = stream_rng(corruption.seed, STREAM_QUEUES);
        scramble_queues(&mut c, &mut rng);
    }

    Ok((c, origins))
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    // routing::corrupt seeds its own rng; fold the stream in.
    seed ^ (stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn place(
    world: &World,
    c: &mut Configuration,
    placement: Placement,
    ghost: GhostId,
    origins: &mut Vec<GhostOrigin>,
) -> Result<(), MaterializeError> {
    match placement {
        Placement::P1 {
            proc,
            emission,
            dest,
            payload,
            last_hop,
            color,
        } => {
            let in_domain = (last_hop == proc || world.topo.are_neighbors(proc, last_hop))
                && color as usize <= world.topo.max_degree();
            if !in_domain {
                return Err(MaterializeError::BadPlacement(format!(
                    "p1 slot at {proc}: last_hop {last_hop}, color {color}"
                )));
            }
            let slot = if emission {
                SlotRef::EmitFor { proc, dest }
            } else {
                SlotRef::RecvFor { proc, dest }
            };
            let store = &mut c.proto.p1_mut()[proc.index()];
            let target = if emission {
                &mut store.buf_e[dest.index()]
            } else {
                &mut store.buf_r[dest.index()]
            };
            if target.is_some() {
                return Err(MaterializeError::SlotOccupied(slot));
            }
            *target = Some(Msg1 {
                payload,
                last_hop,
                color,
                ghost,
            });
            origins.push(GhostOrigin {
                ghost,
                payload,
                dest,
                valid_source: None,
                injected_at: Some(slot),
            });
        }
        Placement::P2 {
            proc,
            rank,
            payload,
            next,
            last,
            dest,
            kind,
        } => {
            let in_domain = world.topo.are_neighbors(proc, next)
                && world.topo.are_neighbors(proc, last)
                && rank >= 1
                && rank <= world.rank_count();
            if !in_domain {
                return Err(MaterializeError::BadPlacement(format!(
                    "p2 slot at {proc} rank {rank}: next {next}, last {last}"
                )));
            }
            let slot = SlotRef::Ranked { proc, rank };
            let target = c.proto.p2_mut()[proc.index()].buf_mut(rank);
            if target.is_some() {
                return Err(MaterializeError::SlotOccupied(slot));
            }
            *target = Some(Msg2 {
                payload,
                next,
                last,
                dest,
                kind,
                ghost,
            });
            origins.push(GhostOrigin {
                ghost,
                payload,
                dest,
                valid_source: None,
                injected_at: Some(slot),
            });
        }
    }
    Ok(())
}

fn inject_random(
    world: &World,
    c: &mut Configuration,
    spec: &CorruptionSpec,
    rng: &mut ChaCha8Rng,
    invalid_idx: &mut u32,
    payloads: &mut PayloadTable,
    origins: &mut Vec<GhostOrigin>,
) {
    match world.protocol {
        Protocol::Ssmfp1 => {
            let mut slots: Vec<(NodeId, bool, NodeId)> = Vec::new();
            for p in world.topo.nodes() {
                for d in world.topo.nodes() {
                    for emission in [false, true] {
                        slots.push((p, emission, d));
                    }
                }
            }
            slots.shuffle(rng);
            let delta = world.topo.max_degree() as u8;
            let mut remaining = spec.inject;
            for (p, emission, d) in slots {
                if remaining == 0 {
                    break;
                }
                let store = &mut c.proto.p1_mut()[p.index()];
                let target = if emission {
                    &mut store.buf_e[d.index()]
                } else {
                    &mut store.buf_r[d.index()]
                };
                if target.is_some() {
                    continue;
                }
                let mut hops: Vec<NodeId> = world.topo.neighbors(p).to_vec();
                hops.push(p);
                let last_hop = hops[rng.random_range(0..hops.len())];
                let color = rng.random_range(0..=delta);
                let payload = payloads.intern(&format!("inv{}", *invalid_idx));
                let ghost = GhostId::Invalid(*invalid_idx);
                *invalid_idx += 1;
                *target = Some(Msg1 {
                    payload,
                    last_hop,
                    color,
                    ghost,
                });
                origins.push(GhostOrigin {
                    ghost,
                    payload,
                    dest: d,
                    valid_source: None,
                    injected_at: Some(if emission {
                        SlotRef::EmitFor { proc: p, dest: d }
                    } else {
                        SlotRef::RecvFor { proc: p, dest: d }
                    }),
                });
                remaining -= 1;
            }
        }
        Protocol::Ssmfp2 => {
            let top = world.rank_count();
            let mut slots: Vec<(NodeId, u8)> = Vec::new();
            for p in world.topo.nodes() {
                if world.topo.neighbors(p).is_empty() {
                    continue;
                }
                for rank in 1..=top {
                    if spec
                        .rank_domain
                        .as_ref()
                        .is_none_or(|dom| dom.contains(&rank))
                    {
                        slots.push((p, rank));
                    }
                }
            }
            slots.shuffle(rng);
            let mut remaining = spec.inject;
            for (p, rank) in slots {
                if remaining == 0 {
                    break;
                }
                if c.proto.p2()[p.index()].buf(rank).is_some() {
                    continue;
                }
                let nbs = world.topo.neighbors(p);
                let next = nbs[rng.random_range(0..nbs.len())];
                let last = nbs[rng.random_range(0..nbs.len())];
                let dest = NodeId(rng.random_range(0..world.topo.n() as u16));
                let kind = [AckKind::S, AckKind::A, AckKind::F][rng.random_range(0..3)];
                let payload = payloads.intern(&format!("inv{}", *invalid_idx));
                let ghost = GhostId::Invalid(*invalid_idx);
                *invalid_idx += 1;
                *c.proto.p2_mut()[p.index()].buf_mut(rank) = Some(Msg2 {
                    payload,
                    next,
                    last,
                    dest,
                    kind,
                    ghost,
                });
                origins.push(GhostOrigin {
                    ghost,
                    payload,
                    dest,
                    valid_source: None,
                    injected_at: Some(SlotRef::Ranked { proc: p, rank }),
                });
                remaining -= 1;
            }
        }
    }
}

fn scramble_queues(c: &mut Configuration, rng: &mut ChaCha8Rng) {
    match &mut c.proto {
        crate::config::ProtoState::P1(procs) => {
            for pr in procs {
                for q in &mut pr.queues {
                    q.order.shuffle(rng);
                }
            }
        }
        crate::config::ProtoState::P2(procs) => {
            for pr in procs {
                for q in &mut pr.queues {
                    q.order.shuffle(rng);
                }
            }
        }
    }
}

/// Request handshake for one processor: raise the bit when a send is
/// waiting, and repair a corrupted raised bit that has no waiting message
/// behind it (its guards could not otherwise be evaluated).
pub fn request_handshake(c: &mut Configuration, p: NodeId) {
    let waiting = c.available_send(p).is_some();
    if waiting && !c.request[p.index()] {
        c.request[p.index()] = true;
    } else if !waiting && c.request[p.index()] {
        c.request[p.index()] = false;
    }
}

/// Handshake pass over all processors; the kernel runs this before every
/// guard-evaluation phase.
pub fn handshake_all(world: &World, c: &mut Configuration) {
    for p in world.topo.nodes() {
        request_handshake(c, p);
    }
}

/// Seeded random workload: `count` sends from random sources, payload tags
/// `g0, g1, ..`. Destinations are random unless pinned by `fixed_dest`.
pub fn generate_sends(
    world: &World,
    seed: u64,
    count: u32,
    every_k: u64,
    fixed_dest: Option<NodeId>,
    payloads: &mut PayloadTable,
) -> WorkloadSpec {
    let mut rng = stream_rng(seed, STREAM_WORKLOAD);
    let n = world.topo.n() as u16;
    let mut sends = Vec::new();
    for i in 0..count {
        let mut from = NodeId(rng.random_range(0..n));
        let dest = match fixed_dest {
            Some(d) => {
                while from == d {
                    from = NodeId(rng.random_range(0..n));
                }
                d
            }
            None => {
                let mut d = NodeId(rng.random_range(0..n));
                while d == from {
                    d = NodeId(rng.random_range(0..n));
                }
                d
            }
        };
        let payload = payloads.intern(&format!("g{i}"));
        sends.push(SendSpec {
            from,
            dest,
            payload,
            available_at: every_k * i as u64,
        });
    }
    WorkloadSpec { sends }
}
