//! Simulator and verifier for two snap-stabilizing message-forwarding
//! protocols on store-and-forward networks.
//!
//! The library executes guarded-command protocol rules under configurable
//! daemons from arbitrary, fault-injected initial configurations, and
//! mechanically checks exactly-once delivery plus the quantitative bounds
//! the protocols are designed around:
//!
//! * [`topology`]: the identified, connected network graph.
//! * [`kernel`]: guard evaluation, daemon selection, atomic steps, rounds.
//! * [`routing`]: a self-stabilizing silent Bellman-Ford table layer.
//! * [`ssmfp1`]: the destination-based scheme (colors, two buffers per
//!   destination).
//! * [`ssmfp2`]: the distance-based scheme (D+1 ranked buffers, S/A/F
//!   acknowledgment cycle).
//! * [`workload`]: send queues and initial-configuration corruption.
//! * [`verifier`]: the delivery ledger, caterpillar monitors, metrics, and
//!   the bounded-exhaustive checker in [`verifier::explore`].
//! * [`scenario`]: the self-contained scenario file format.
//! * [`cli`]: the `run` / `sweep` / `check` / `report` commands.
//!
//! The `examples/` directory has one runnable example per capability; the
//! `snapfwd` binary wraps the same library entry points.

pub mod cli;
pub mod config;
pub mod kernel;
pub mod message;
pub mod routing;
pub mod rules;
pub mod scenario;
pub mod ssmfp1;
pub mod ssmfp2;
pub mod topology;
pub mod trace;
pub mod verifier;
pub mod workload;

pub use config::{Configuration, Protocol, RoutingMode, World};
pub use kernel::{Daemon, DaemonPolicy, RunOutcome, RunParams};
pub use message::{GhostId, Payload, PayloadTable};
pub use scenario::Scenario;
pub use topology::{NodeId, Topology};
pub use verifier::{Verdict, Violation};
