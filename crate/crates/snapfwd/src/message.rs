//! Message values carried in buffers, plus the verification-only ghost
//! identities the ledger uses to detect loss and duplication. Ghosts never
//! influence guards; the protocol flags must do all disambiguation work.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

/// Interned useful-information tag. Guards compare payloads by equality
/// only, so an index into the scenario's payload table suffices.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Payload(pub u32);

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// Payload tag names, fixed at scenario build time.
#[derive(Debug, Clone, Default)]
pub struct PayloadTable {
    names: Vec<String>,
}

impl PayloadTable {
    pub fn intern(&mut self, name: &str) -> Payload {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Payload(i as u32);
        }
        self.names.push(name.to_string());
        Payload(self.names.len() as u32 - 1)
    }

    pub fn name(&self, p: Payload) -> &str {
        &self.names[p.0 as usize]
    }
}

/// Lineage tag for one message: `Valid` ghosts are created by generation
/// rules during the run, `Invalid` ghosts exist in the initial
/// configuration. Invisible to guards.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GhostId {
    Valid(u32),
    Invalid(u32),
}

impl GhostId {
    pub fn is_valid(self) -> bool {
        matches!(self, GhostId::Valid(_))
    }
}

impl fmt::Debug for GhostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GhostId::Valid(i) => write!(f, "v{i}"),
            GhostId::Invalid(i) => write!(f, "i{i}"),
        }
    }
}

impl fmt::Display for GhostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Destination-based scheme message: `(m, lastHop, color)`. The slot index
/// carries the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Msg1 {
    pub payload: Payload,
    /// Identity of the last processor the message crossed; the generating
    /// processor itself right after generation.
    pub last_hop: NodeId,
    /// Color in `0..=Δ`, chosen fresh on every move into an emission buffer.
    pub color: u8,
    pub ghost: GhostId,
}

impl Msg1 {
    /// Flag-level equality `(m, *, c)`: payload and color, any last hop.
    pub fn matches_payload_color(&self, payload: Payload, color: u8) -> bool {
        self.payload == payload && self.color == color
    }

    /// Flag-level equality `(m, q, c)`: payload, last hop, and color.
    pub fn matches_full(&self, payload: Payload, last_hop: NodeId, color: u8) -> bool {
        self.payload == payload && self.last_hop == last_hop && self.color == color
    }
}

/// Acknowledgment type of a ranked-buffer message copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AckKind {
    /// Sending: still travelling toward its destination.
    S,
    /// Acknowledgment: delivered; propagates back to the sink.
    A,
    /// Fail: hit the top rank without crossing its destination.
    F,
}

impl fmt::Display for AckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AckKind::S => write!(f, "S"),
            AckKind::A => write!(f, "A"),
            AckKind::F => write!(f, "F"),
        }
    }
}

/// Distance-based scheme message: `(m, next, last, dest, type)`. The next
/// hop is computed when the copy lands in a buffer, so later routing-table
/// moves cannot fork its path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Msg2 {
    pub payload: Payload,
    /// Neighbor the copy will be forwarded to.
    pub next: NodeId,
    /// Neighbor the copy arrived from (arbitrary right after generation).
    pub last: NodeId,
    pub dest: NodeId,
    pub kind: AckKind,
    pub ghost: GhostId,
}

impl Msg2 {
    /// Pattern `(m, *, last, dest, kind?)`: fixed payload, any next hop,
    /// fixed last hop and destination, optionally fixed type.
    pub fn matches_from(
        &self,
        payload: Payload,
        last: NodeId,
        dest: NodeId,
        kind: Option<AckKind>,
    ) -> bool {
        self.payload == payload
            && self.last == last
            && self.dest == dest
            && kind.is_none_or(|k| self.kind == k)
    }

    /// Pattern `(m, next, *, dest, kind?)`: fixed payload, next hop and
    /// destination, any last hop, optionally fixed type.
    pub fn matches_toward(
        &self,
        payload: Payload,
        next: NodeId,
        dest: NodeId,
        kind: Option<AckKind>,
    ) -> bool {
        self.payload == payload
            && self.next == next
            && self.dest == dest
            && kind.is_none_or(|k| self.kind == k)
    }
}

/// Address of one buffer slot, for ghost-effect records and witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotRef {
    /// Reception buffer of the destination-based scheme.
    RecvFor { proc: NodeId, dest: NodeId },
    /// Emission buffer of the destination-based scheme.
    EmitFor { proc: NodeId, dest: NodeId },
    /// Ranked buffer of the distance-based scheme (rank is 1-based).
    Ranked { proc: NodeId, rank: u8 },
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotRef::RecvFor { proc, dest } => write!(f, "R:{proc}:{dest}"),
            SlotRef::EmitFor { proc, dest } => write!(f, "E:{proc}:{dest}"),
            SlotRef::Ranked { proc, rank } => write!(f, "B:{proc}:{rank}"),
        }
    }
}

/// Per-instance ghost bookkeeping emitted by a step. The ledger replays
/// these to track live copy counts and delivery events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GhostEffect {
    Generated {
        ghost: GhostId,
        at: SlotRef,
        dest: NodeId,
        payload: Payload,
    },
    Copied {
        ghost: GhostId,
        from: SlotRef,
        to: SlotRef,
    },
    /// Atomic move within one processor (copy + erase in the same step).
    Moved {
        ghost: GhostId,
        from: SlotRef,
        to: SlotRef,
    },
    Erased {
        ghost: GhostId,
        at: SlotRef,
    },
    Delivered {
        ghost: GhostId,
        at: NodeId,
    },
}
