//! Rule instances: the unit a daemon selects. An instance names the
//! processor, the layer, the guarded-command rule, and the rule's quantified
//! parameter (destination or buffer rank) where one exists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

/// Destination-based scheme rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum P1Rule {
    /// Generate a waiting message into the own reception buffer.
    R1,
    /// Move a message from the reception to the emission buffer, stamping a
    /// fresh color.
    R2,
    /// Copy a chosen neighbor's emitted message into the reception buffer.
    R3,
    /// Erase an emitted message once its copy sits in the successor's
    /// reception buffer and nowhere else.
    R4,
    /// Erase a received copy whose emitter now routes elsewhere.
    R5,
    /// Deliver at the destination and clear the emission buffer.
    R6,
}

/// Distance-based scheme rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum P2Rule {
    /// Generate a waiting message into the rank-1 buffer with type S.
    R1,
    /// Rank 1, type F, not at destination: restamp to S (re-emission).
    R2,
    /// Rank 1, type A, not at destination: erase (acknowledged).
    R3,
    /// Rank 1 at destination, type S: deliver, restamp to A.
    R4,
    /// Rank 1 at destination, type A: erase.
    R5,
    /// Rank 1 at destination, type F: restamp to S.
    R6,
    /// Ranks 1..D: pull the successor's F/A type down the income path.
    R7,
    /// Ranks 2..D: copy a chosen predecessor's type-S message upward.
    R8,
    /// Ranks 2..D: erase once the predecessor carries the same F/A type and
    /// the successor no longer matches.
    R9,
    /// Ranks 2..D+1 at destination, type S: deliver, restamp to A.
    R10,
    /// Ranks 2..D+1 at destination, F/A with matching predecessor: erase.
    R11,
    /// Rank D+1: copy a chosen predecessor's type-S message to the top.
    R12,
    /// Rank D+1, type S, not at destination: restamp to F.
    R13,
    /// Rank D+1, F/A with matching predecessor: erase.
    R14,
    /// Ranks 2..D correction: erase an F/A copy with neither a matching
    /// successor nor any predecessor copy (orphan tail).
    R15,
    /// Ranks 2..D correction: erase an F/A copy whose predecessor carries a
    /// conflicting ack type or is the destination itself.
    R16,
    /// Rank D+1 correction: erase an F/A copy with no predecessor copy.
    R17,
    /// Rank D+1 correction: erase an F/A copy whose predecessor carries a
    /// conflicting ack type or is the destination itself.
    R18,
}

/// One selectable action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Recompute the full routing table from the neighbors' estimates.
    Routing,
    /// Scripted repair: overwrite the whole table with canonical values.
    RoutingRepair,
    P1 { rule: P1Rule, dest: NodeId },
    P2 { rule: P2Rule, rank: u8 },
}

impl Rule {
    pub fn layer(&self) -> Layer {
        match self {
            Rule::Routing | Rule::RoutingRepair => Layer::Routing,
            Rule::P1 { .. } | Rule::P2 { .. } => Layer::Forwarding,
        }
    }

    /// Wire name used in traces, scripts, and the mutant flag.
    pub fn wire_name(&self) -> String {
        match self {
            Rule::Routing => "route".into(),
            Rule::RoutingRepair => "repair".into(),
            Rule::P1 { rule, .. } => format!("{rule:?}"),
            Rule::P2 { rule, .. } => format!("{rule:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Routing,
    Forwarding,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Routing => write!(f, "routing"),
            Layer::Forwarding => write!(f, "forwarding"),
        }
    }
}

/// (processor, rule) pair whose guard held when it was enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleInstance {
    pub proc: NodeId,
    pub rule: Rule,
}

impl fmt::Display for RuleInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Rule::Routing => write!(f, "{}:route", self.proc),
            Rule::RoutingRepair => write!(f, "{}:repair", self.proc),
            Rule::P1 { rule, dest } => write!(f, "{}:{:?}@{}", self.proc, rule, dest),
            Rule::P2 { rule, rank } => write!(f, "{}:{:?}#{}", self.proc, rule, rank),
        }
    }
}

/// Deliberate guard weakenings for mutation testing of the verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mutant {
    /// Drop the "no other neighbor holds my copy" clause from the
    /// destination-based erase-after-forward rule.
    Ssmfp1R4DropForallR,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown mutant '{0}', expected e.g. ssmfp1.R4:forall-r")]
pub struct MutantParseError(pub String);

impl FromStr for Mutant {
    type Err = MutantParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ssmfp1.R4:forall-r" => Ok(Mutant::Ssmfp1R4DropForallR),
            other => Err(MutantParseError(other.to_string())),
        }
    }
}

impl fmt::Display for Mutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutant::Ssmfp1R4DropForallR => write!(f, "ssmfp1.R4:forall-r"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MutantSet {
    pub ssmfp1_r4_drop_forall_r: bool,
}

impl MutantSet {
    pub fn enable(&mut self, m: Mutant) {
        match m {
            Mutant::Ssmfp1R4DropForallR => self.ssmfp1_r4_drop_forall_r = true,
        }
    }

    pub fn any(&self) -> bool {
        self.ssmfp1_r4_drop_forall_r
    }
}
