//! Trace and metrics serialization. Traces are JSON lines, one record per
//! step, streamed as the run produces them; metrics go to CSV plus a short
//! text summary. The post-state hash is the stable 64-bit configuration
//! hash, rendered as fixed-width hex.

use std::io::{self, Write};

use serde::Serialize;

use crate::kernel::{Observer, ObserverStop, StepEvent};
use crate::message::GhostEffect;
use crate::rules::Rule;
use crate::verifier::Metrics;

#[derive(Serialize)]
struct ChosenRecord {
    proc: u16,
    layer: String,
    rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    dest: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<u8>,
}

#[derive(Serialize)]
struct EffectRecord {
    kind: &'static str,
    ghost: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    at: Option<String>,
}

#[derive(Serialize)]
struct StepRecordLine {
    step: u64,
    round: u64,
    chosen: Vec<ChosenRecord>,
    effects: Vec<EffectRecord>,
    post_hash: String,
}

fn chosen_record(rule: &Rule, proc: u16) -> ChosenRecord {
    let (dest, rank) = match rule {
        Rule::Routing => (None, None),
        Rule::RoutingRepair => (None, None),
        Rule::P1 { dest, .. } => (Some(dest.0), None),
        Rule::P2 { rank, .. } => (None, Some(*rank)),
    };
    ChosenRecord {
        proc,
        layer: rule.layer().to_string(),
        rule: rule.wire_name(),
        dest,
        rank,
    }
}

fn effect_record(e: &GhostEffect) -> EffectRecord {
    match e {
        GhostEffect::Generated { ghost, at, .. } => EffectRecord {
            kind: "generated",
            ghost: ghost.to_string(),
            from: None,
            to: Some(at.to_string()),
            at: None,
        },
        GhostEffect::Copied { ghost, from, to } => EffectRecord {
            kind: "copied",
            ghost: ghost.to_string(),
            from: Some(from.to_string()),
            to: Some(to.to_string()),
            at: None,
        },
        GhostEffect::Moved { ghost, from, to } => EffectRecord {
            kind: "moved",
            ghost: ghost.to_string(),
            from: Some(from.to_string()),
            to: Some(to.to_string()),
            at: None,
        },
        GhostEffect::Erased { ghost, at } => EffectRecord {
            kind: "erased",
            ghost: ghost.to_string(),
            from: None,
            to: None,
            at: Some(at.to_string()),
        },
        GhostEffect::Delivered { ghost, at } => EffectRecord {
            kind: "delivered",
            ghost: ghost.to_string(),
            from: None,
            to: None,
            at: Some(at.to_string()),
        },
    }
}

/// Observer writing one JSON line per step.
pub struct TraceWriter<W: Write> {
    out: W,
    pub error: Option<io::Error>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out, error: None }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Observer for TraceWriter<W> {
    fn on_step(&mut self, ev: &StepEvent<'_>) -> Result<(), ObserverStop> {
        let line = StepRecordLine {
            step: ev.step,
            round: ev.round,
            chosen: ev
                .chosen
                .iter()
                .map(|i| chosen_record(&i.rule, i.proc.0))
                .collect(),
            effects: ev.effects.iter().map(effect_record).collect(),
            post_hash: format!("{:016x}", ev.post.stable_hash()),
        };
        let res = serde_json::to_writer(&mut self.out, &line)
            .map_err(io::Error::other)
            .and_then(|()| self.out.write_all(b"\n"));
        if let Err(e) = res {
            self.error = Some(e);
            return Err(ObserverStop);
        }
        Ok(())
    }
}

pub const METRICS_HEADER: &str =
    "ghost_id,valid,generated_step,delivered_step,rounds_to_delivery,destination";

/// Writes the per-ghost metrics CSV.
pub fn write_metrics_csv<W: Write>(out: &mut W, metrics: &Metrics) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for g in &metrics.ghosts {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            g.ghost,
            g.valid,
            opt(g.generated_step),
            opt(g.delivered_step),
            opt(g.rounds_to_delivery),
            g.destination
        )?;
    }
    Ok(())
}

/// Human-readable run summary.
pub fn write_summary<W: Write>(out: &mut W, metrics: &Metrics) -> io::Result<()> {
    writeln!(out, "steps:                {}", metrics.steps)?;
    writeln!(out, "rounds:               {}", metrics.rounds)?;
    writeln!(out, "deliveries:           {}", metrics.deliveries)?;
    writeln!(out, "routing silence round: {}", metrics.routing_silence_round)?;
    match metrics.amortized_rounds_per_delivery {
        Some(a) => writeln!(out, "amortized rounds/delivery: {a:.2}")?,
        None => writeln!(out, "amortized rounds/delivery: n/a (no deliveries)")?,
    }
    writeln!(out, "max observed starvation: {}", metrics.max_observed_starve)?;
    let worst_invalid = metrics
        .invalid_deliveries_per_dest
        .iter()
        .enumerate()
        .max_by_key(|(_, c)| **c);
    if let Some((d, c)) = worst_invalid {
        writeln!(out, "max invalid deliveries per destination: {c} (at {d})")?;
    }
    Ok(())
}

/// Renders one destination component of a destination-based configuration:
/// buffer contents with ghost tags, request bits, and the next hop toward
/// `dest`. Used by the pinned-replay example and its golden test.
pub fn render_p1_component(
    scenario: &crate::scenario::Scenario,
    c: &crate::config::Configuration,
    payloads: &crate::message::PayloadTable,
    dest: crate::topology::NodeId,
) -> String {
    let mut out = String::new();
    let procs = c.proto.p1();
    for p in scenario.topo.nodes() {
        let pr = &procs[p.index()];
        let slot = |m: &Option<crate::message::Msg1>| match m {
            None => "-".to_string(),
            Some(m) => format!(
                "({},{},{})[{}]",
                payloads.name(m.payload),
                scenario.label(m.last_hop),
                m.color,
                m.ghost
            ),
        };
        out.push_str(&format!(
            "{}: bufR={} bufE={} req={} nextHop={}\n",
            scenario.label(p),
            slot(&pr.buf_r[dest.index()]),
            slot(&pr.buf_e[dest.index()]),
            c.request[p.index()] as u8,
            c.next_hop(p, dest)
                .map(|h| scenario.label(h).to_string())
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}
