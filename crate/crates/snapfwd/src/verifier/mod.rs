//! Verdicts over executions: the delivery ledger (exactly-once accounting
//! by ghost identity), caterpillar-invariant monitors, round and amortized
//! metrics, and the bounded-exhaustive checker in [`explore`].

pub mod explore;

use std::collections::BTreeMap;
use std::fmt;

use crate::config::{Configuration, Protocol, World};
use crate::kernel::{Observer, ObserverStop, RunOutcome, RunReport, StepEvent};
use crate::message::{AckKind, GhostEffect, GhostId, SlotRef};
use crate::rules::{P1Rule, Rule};
use crate::ssmfp1;
use crate::ssmfp2;
use crate::topology::NodeId;
use crate::workload::GhostOrigin;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// A valid ghost's last copy vanished without a delivery.
    Loss,
    /// A ghost delivered more than once.
    Duplication,
    /// Delivered at a processor other than its destination.
    Misdelivery,
    /// Invalid deliveries to one destination exceeded the scheme bound.
    InvalidBound,
    /// A continuously enabled processor went unchosen past the bound.
    Fairness,
    /// A round budget (delivery or saturation window) was missed.
    ProgressBudget,
    /// A structural monitor tripped; names the monitor.
    Monitor(String),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::Loss => write!(f, "loss"),
            ViolationKind::Duplication => write!(f, "duplication"),
            ViolationKind::Misdelivery => write!(f, "misdelivery"),
            ViolationKind::InvalidBound => write!(f, "invalid-bound"),
            ViolationKind::Fairness => write!(f, "fairness"),
            ViolationKind::ProgressBudget => write!(f, "progress-budget"),
            ViolationKind::Monitor(name) => write!(f, "monitor:{name}"),
        }
    }
}

/// A failed check with enough context to replay it: the owning scenario and
/// seed travel alongside in reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Violation(Violation),
    /// Step budget ran out before the run finished; not a verdict on the
    /// protocol.
    BudgetExceeded,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Per-ghost ledger entry.
#[derive(Debug, Clone)]
pub struct GhostRecord {
    pub origin: GhostOrigin,
    pub generated_step: Option<u64>,
    pub generated_round: u64,
    pub deliveries: Vec<(u64, u64, NodeId)>,
    pub live_copies: u32,
    pub slots: Vec<SlotRef>,
}

impl GhostRecord {
    fn delivered(&self) -> bool {
        !self.deliveries.is_empty()
    }
}

/// Per-ghost row of the metrics report.
#[derive(Debug, Clone)]
pub struct GhostMetric {
    pub ghost: GhostId,
    pub valid: bool,
    pub generated_step: Option<u64>,
    pub delivered_step: Option<u64>,
    pub rounds_to_delivery: Option<u64>,
    pub destination: NodeId,
}

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub steps: u64,
    pub rounds: u64,
    pub deliveries: u32,
    pub invalid_deliveries_per_dest: Vec<u32>,
    /// Last round in which any table rule was enabled (measured
    /// stabilization time of the routing layer).
    pub routing_silence_round: u64,
    pub amortized_rounds_per_delivery: Option<f64>,
    pub max_observed_starve: u32,
    pub ghosts: Vec<GhostMetric>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("no deliveries in trace")]
pub struct NoDeliveries;

/// Total rounds divided by delivered messages.
pub fn amortized(metrics: &Metrics) -> Result<f64, NoDeliveries> {
    if metrics.deliveries == 0 {
        return Err(NoDeliveries);
    }
    Ok(metrics.rounds as f64 / metrics.deliveries as f64)
}

/// Round budget applied to each valid ghost's generation-to-delivery time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeliveryBudget {
    Off,
    /// 4 x max(measured routing silence, scheme worst case).
    Auto,
    Rounds(u64),
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub delivery_budget: DeliveryBudget,
    /// Assert the per-destination window (destination-based scheme) or the
    /// global window (distance-based scheme) on round starts.
    pub saturation_window: bool,
    /// Cross-check incremental copy counts against a full recount each step.
    pub recount_every_step: bool,
    /// Trace-scan fairness bound; `None` skips the check.
    pub fairness_bound: Option<u32>,
    /// Run caterpillar monitors (head uniqueness, sink persistence,
    /// classification) on touched ghosts each step.
    pub monitor_caterpillars: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            delivery_budget: DeliveryBudget::Auto,
            saturation_window: false,
            recount_every_step: false,
            fairness_bound: None,
            monitor_caterpillars: true,
        }
    }
}

/// Streaming auditor: consumes step events as the kernel produces them and
/// holds nothing proportional to the trace length beyond round bookkeeping.
pub struct Audit {
    world: World,
    cfg: AuditConfig,
    ghosts: BTreeMap<GhostId, GhostRecord>,
    violation: Option<Violation>,
    steps: u64,
    rounds_seen: u64,
    deliveries: u32,
    invalid_per_dest: Vec<u32>,
    last_routing_round: u64,
    starve: Vec<u32>,
    max_starve: u32,
    /// Round-start presence snapshots for the saturation check: per round,
    /// per destination occupancy (destination scheme) or global type-S
    /// caterpillar presence (distance scheme, single flag at index 0).
    presence: Vec<Vec<bool>>,
    /// (round, destination) of every delivery.
    delivery_rounds: Vec<(u64, NodeId)>,
}

impl Audit {
    pub fn new(world: &World, origins: &[GhostOrigin], cfg: AuditConfig) -> Self {
        let n = world.topo.n();
        let mut ghosts = BTreeMap::new();
        for o in origins {
            let invalid = o.injected_at.is_some();
            ghosts.insert(
                o.ghost,
                GhostRecord {
                    origin: o.clone(),
                    generated_step: if invalid { Some(0) } else { None },
                    generated_round: 0,
                    deliveries: Vec::new(),
                    live_copies: invalid as u32,
                    slots: o.injected_at.into_iter().collect(),
                },
            );
        }
        Audit {
            world: world.clone(),
            cfg,
            ghosts,
            violation: None,
            steps: 0,
            rounds_seen: 0,
            deliveries: 0,
            invalid_per_dest: vec![0; n],
            last_routing_round: 0,
            starve: vec![0; n],
            max_starve: 0,
            presence: Vec::new(),
            delivery_rounds: Vec::new(),
        }
    }

    pub fn violation(&self) -> Option<&Violation> {
        self.violation.as_ref()
    }

    fn flag(&mut self, kind: ViolationKind, step: u64, detail: String) {
        if self.violation.is_none() {
            self.violation = Some(Violation { kind, step, detail });
        }
    }

    fn apply_effect(&mut self, step: u64, round: u64, effect: &GhostEffect) {
        match effect {
            GhostEffect::Generated { ghost, at, dest, .. } => {
                let Some(rec) = self.ghosts.get_mut(ghost) else {
                    self.flag(
                        ViolationKind::Monitor("ledger".into()),
                        step,
                        format!("generated unknown ghost {ghost}"),
                    );
                    return;
                };
                rec.generated_step = Some(step);
                rec.generated_round = round;
                rec.live_copies += 1;
                rec.slots.push(*at);
                debug_assert_eq!(rec.origin.dest, *dest);
            }
            GhostEffect::Copied { ghost, to, .. } => {
                if let Some(rec) = self.ghosts.get_mut(ghost) {
                    rec.live_copies += 1;
                    rec.slots.push(*to);
                }
            }
            GhostEffect::Moved { ghost, from, to } => {
                if let Some(rec) = self.ghosts.get_mut(ghost) {
                    rec.slots.retain(|s| s != from);
                    rec.slots.push(*to);
                }
            }
            GhostEffect::Erased { ghost, at } => {
                let Some(rec) = self.ghosts.get_mut(ghost) else { return };
                if rec.live_copies == 0 {
                    self.flag(
                        ViolationKind::Monitor("ledger".into()),
                        step,
                        format!("erase of {ghost} with zero live copies"),
                    );
                    return;
                }
                rec.live_copies -= 1;
                rec.slots.retain(|s| s != at);
            }
            GhostEffect::Delivered { ghost, at } => {
                let Some(rec) = self.ghosts.get_mut(ghost) else { return };
                rec.deliveries.push((step, round, *at));
                let dest = rec.origin.dest;
                let count = rec.deliveries.len();
                let valid = ghost.is_valid();
                self.deliveries += 1;
                self.delivery_rounds.push((round, *at));
                if *at != dest {
                    self.flag(
                        ViolationKind::Misdelivery,
                        step,
                        format!("{ghost} delivered at {at}, destined {dest}"),
                    );
                }
                if count > 1 {
                    self.flag(
                        ViolationKind::Duplication,
                        step,
                        format!("{ghost} delivered {count} times"),
                    );
                }
                if !valid {
                    self.invalid_per_dest[at.index()] += 1;
                    if self.world.protocol == Protocol::Ssmfp1 {
                        let bound = 2 * self.world.topo.n() as u32;
                        if self.invalid_per_dest[at.index()] > bound {
                            self.flag(
                                ViolationKind::InvalidBound,
                                step,
                                format!(
                                    "{} invalid deliveries at {at}, bound {bound}",
                                    self.invalid_per_dest[at.index()]
                                ),
                            );
                        }
                    }
                }
            }
        }
    }

    fn check_loss(&mut self, step: u64, touched: &[GhostId]) {
        for g in touched {
            let Some(rec) = self.ghosts.get(g) else { continue };
            if g.is_valid()
                && rec.generated_step.is_some()
                && rec.live_copies == 0
                && !rec.delivered()
            {
                self.flag(
                    ViolationKind::Loss,
                    step,
                    format!("{g} erased everywhere without delivery"),
                );
            }
        }
    }

    /// Color chosen by an emission move must avoid every color visible in
    /// the neighbors' reception buffers of the state the move read.
    fn check_color_locality(&mut self, ev: &StepEvent<'_>) {
        for inst in ev.chosen {
            let Rule::P1 { rule: P1Rule::R2, dest } = inst.rule else {
                continue;
            };
            let p = inst.proc;
            let expected = ssmfp1::color_of(&self.world, ev.pre, p, dest);
            let written = ev.post.proto.p1()[p.index()].buf_e[dest.index()]
                .as_ref()
                .map(|m| m.color);
            if written != Some(expected) {
                self.flag(
                    ViolationKind::Monitor("color-locality".into()),
                    ev.step,
                    format!("{p} wrote color {written:?} for {dest}, expected {expected}"),
                );
                continue;
            }
            let collision = self
                .world
                .topo
                .neighbors(p)
                .iter()
                .copied()
                .find(|q| {
                    ev.pre.proto.p1()[q.index()].buf_r[dest.index()]
                        .as_ref()
                        .is_some_and(|m| m.color == expected)
                });
            if let Some(q) = collision {
                self.flag(
                    ViolationKind::Monitor("color-locality".into()),
                    ev.step,
                    format!("fresh color {expected} at {p} collides with {q}"),
                );
            }
        }
    }

    fn check_caterpillars(&mut self, ev: &StepEvent<'_>, touched: &[GhostId]) {
        for g in touched {
            let Some(rec) = self.ghosts.get(g) else { continue };
            let live = rec.live_copies;
            let delivered = rec.delivered();
            let generated = rec.generated_step.is_some();
            let source = rec.origin.valid_source;
            if live == 0 {
                continue;
            }
            match self.world.protocol {
                Protocol::Ssmfp1 => {
                    if let Err(e) = ssmfp1::classify(&self.world, ev.post, *g) {
                        self.flag(
                            ViolationKind::Monitor("unclassifiable".into()),
                            ev.step,
                            e.to_string(),
                        );
                    }
                }
                Protocol::Ssmfp2 => match ssmfp2::classify(&self.world, ev.post, *g) {
                    Err(e) => self.flag(
                        ViolationKind::Monitor("unclassifiable".into()),
                        ev.step,
                        e.to_string(),
                    ),
                    Ok(cats) => {
                        if g.is_valid() && cats.len() != 1 {
                            self.flag(
                                ViolationKind::Monitor("head-uniqueness".into()),
                                ev.step,
                                format!("{g} carried by {} caterpillars", cats.len()),
                            );
                        }
                    }
                },
            }
            // The rank-1 copy at the source persists until delivery.
            if self.world.protocol == Protocol::Ssmfp2 && g.is_valid() && !delivered {
                if let Some(src) = source {
                    let held = ev.post.proto.p2()[src.index()]
                        .buf(1)
                        .as_ref()
                        .is_some_and(|m| m.ghost == *g);
                    if generated && !held {
                        self.flag(
                            ViolationKind::Monitor("sink-persistence".into()),
                            ev.step,
                            format!("{g} missing from its source rank-1 buffer"),
                        );
                    }
                }
            }
        }
    }

    fn recount(&mut self, ev: &StepEvent<'_>) {
        let mut counts: BTreeMap<GhostId, u32> = BTreeMap::new();
        match &ev.post.proto {
            crate::config::ProtoState::P1(procs) => {
                for pr in procs {
                    for m in pr.buf_r.iter().chain(pr.buf_e.iter()).flatten() {
                        *counts.entry(m.ghost).or_default() += 1;
                    }
                }
            }
            crate::config::ProtoState::P2(procs) => {
                for pr in procs {
                    for m in pr.bufs.iter().flatten() {
                        *counts.entry(m.ghost).or_default() += 1;
                    }
                }
            }
        }
        for (g, rec) in &self.ghosts {
            let actual = counts.get(g).copied().unwrap_or(0);
            if actual != rec.live_copies {
                self.flag(
                    ViolationKind::Monitor("ledger".into()),
                    ev.step,
                    format!("{g}: ledger says {} copies, state has {actual}", rec.live_copies),
                );
                return;
            }
        }
    }

    fn check_fairness(&mut self, ev: &StepEvent<'_>) {
        let Some(bound) = self.cfg.fairness_bound else { return };
        let n = self.world.topo.n();
        let mut enabled = vec![false; n];
        for inst in ev.enabled_pre {
            enabled[inst.proc.index()] = true;
        }
        let mut acted = vec![false; n];
        for inst in ev.chosen {
            acted[inst.proc.index()] = true;
        }
        for i in 0..n {
            if acted[i] || !enabled[i] {
                self.starve[i] = 0;
            } else {
                self.starve[i] += 1;
                self.max_starve = self.max_starve.max(self.starve[i]);
                if self.starve[i] > bound {
                    self.flag(
                        ViolationKind::Fairness,
                        ev.step,
                        format!(
                            "processor {} continuously enabled and unchosen for {} steps",
                            i, self.starve[i]
                        ),
                    );
                }
            }
        }
    }

    fn scheme_worst_case(&self) -> u64 {
        let n = self.world.topo.n() as u64;
        let d = self.world.topo.diameter() as u32;
        let delta = self.world.topo.max_degree() as u64;
        let reach = delta.max(1).saturating_pow(d);
        let base = match self.world.protocol {
            Protocol::Ssmfp1 => reach,
            Protocol::Ssmfp2 => n.saturating_mul(d as u64).max(1).saturating_mul(reach),
        };
        // The asymptotic term degenerates on near-trivial graphs (Δ = 1);
        // floor it by the per-hop rule work so the net stays a safety net.
        base.max(4 * (d as u64 + 1))
    }

    fn saturation_window_len(&self) -> u64 {
        let d = self.world.topo.diameter() as u64;
        match self.world.protocol {
            Protocol::Ssmfp1 => 3 * d,
            Protocol::Ssmfp2 => 3 * d + 1,
        }
    }

    fn snapshot_presence(&mut self, config: &Configuration) {
        let n = self.world.topo.n();
        let row = match self.world.protocol {
            Protocol::Ssmfp1 => {
                let mut row = vec![false; n];
                let procs = config.proto.p1();
                for pr in procs {
                    for d in 0..n {
                        if pr.buf_r[d].is_some() || pr.buf_e[d].is_some() {
                            row[d] = true;
                        }
                    }
                }
                row
            }
            Protocol::Ssmfp2 => {
                let mut any_sending = false;
                for (g, rec) in &self.ghosts {
                    if rec.live_copies == 0 {
                        continue;
                    }
                    if let Ok(cats) = ssmfp2::classify(&self.world, config, *g) {
                        if cats.iter().any(|c| c.kind == AckKind::S) {
                            any_sending = true;
                            break;
                        }
                    }
                }
                vec![any_sending]
            }
        };
        self.presence.push(row);
    }

    fn finish_saturation(&mut self, final_rounds: u64, outcome: RunOutcome) {
        if !self.cfg.saturation_window {
            return;
        }
        let window = self.saturation_window_len().max(1);
        let complete = matches!(outcome, RunOutcome::Terminal);
        for (idx, row) in self.presence.iter().enumerate() {
            let round = idx as u64 + 1;
            let deadline = round + window - 1;
            if deadline > final_rounds && !complete {
                continue;
            }
            let horizon = deadline.min(final_rounds.max(round));
            match self.world.protocol {
                Protocol::Ssmfp1 => {
                    for (d, present) in row.iter().enumerate() {
                        if !present {
                            continue;
                        }
                        let hit = self.delivery_rounds.iter().any(|&(r, at)| {
                            at.index() == d && r >= round && r <= horizon
                        });
                        if !hit {
                            self.violation.get_or_insert(Violation {
                                kind: ViolationKind::ProgressBudget,
                                step: 0,
                                detail: format!(
                                    "no delivery to {d} in rounds {round}..={deadline} despite pending traffic"
                                ),
                            });
                        }
                    }
                }
                Protocol::Ssmfp2 => {
                    if row[0] {
                        let hit = self
                            .delivery_rounds
                            .iter()
                            .any(|&(r, _)| r >= round && r <= horizon);
                        if !hit {
                            self.violation.get_or_insert(Violation {
                                kind: ViolationKind::ProgressBudget,
                                step: 0,
                                detail: format!(
                                    "no delivery in rounds {round}..={deadline} despite sending caterpillars"
                                ),
                            });
                        }
                    }
                }
            }
        }
    }

    /// Closes the ledger and issues the verdict plus metrics.
    pub fn finish(mut self, report: &RunReport) -> (Verdict, Metrics) {
        self.finish_saturation(report.rounds, report.outcome);

        // Completeness only judged on maximal executions.
        if self.violation.is_none() && report.outcome == RunOutcome::Terminal {
            for (g, rec) in &self.ghosts {
                if !g.is_valid() {
                    continue;
                }
                if rec.deliveries.len() != 1 {
                    let v = if rec.live_copies == 0 {
                        Violation {
                            kind: ViolationKind::Loss,
                            step: report.steps,
                            detail: format!("{g} ended with {} deliveries", rec.deliveries.len()),
                        }
                    } else {
                        Violation {
                            kind: ViolationKind::ProgressBudget,
                            step: report.steps,
                            detail: format!("{g} still live in a terminal configuration"),
                        }
                    };
                    self.violation.get_or_insert(v);
                }
            }
        }

        if self.violation.is_none() {
            let budget = match self.cfg.delivery_budget {
                DeliveryBudget::Off => None,
                DeliveryBudget::Rounds(r) => Some(r),
                DeliveryBudget::Auto => {
                    Some(4u64.saturating_mul(self.last_routing_round.max(self.scheme_worst_case())))
                }
            };
            if let Some(budget) = budget {
                for (g, rec) in &self.ghosts {
                    if !g.is_valid() {
                        continue;
                    }
                    if let (Some(_), Some(&(_, dround, _))) =
                        (rec.generated_step, rec.deliveries.first())
                    {
                        let took = dround.saturating_sub(rec.generated_round);
                        if took > budget {
                            self.violation.get_or_insert(Violation {
                                kind: ViolationKind::ProgressBudget,
                                step: report.steps,
                                detail: format!("{g} took {took} rounds, budget {budget}"),
                            });
                        }
                    }
                }
            }
        }

        let ghosts = self
            .ghosts
            .values()
            .map(|rec| GhostMetric {
                ghost: rec.origin.ghost,
                valid: rec.origin.ghost.is_valid(),
                generated_step: rec.generated_step,
                delivered_step: rec.deliveries.first().map(|&(s, _, _)| s),
                rounds_to_delivery: rec
                    .deliveries
                    .first()
                    .map(|&(_, r, _)| r.saturating_sub(rec.generated_round)),
                destination: rec.origin.dest,
            })
            .collect();
        let mut metrics = Metrics {
            steps: report.steps,
            rounds: report.rounds,
            deliveries: self.deliveries,
            invalid_deliveries_per_dest: self.invalid_per_dest.clone(),
            routing_silence_round: self.last_routing_round,
            amortized_rounds_per_delivery: None,
            max_observed_starve: self.max_starve,
            ghosts,
        };
        metrics.amortized_rounds_per_delivery = amortized(&metrics).ok();

        let verdict = match (&self.violation, report.outcome) {
            (Some(v), _) => Verdict::Violation(v.clone()),
            (None, RunOutcome::StepBudget) => Verdict::BudgetExceeded,
            _ => Verdict::Pass,
        };
        (verdict, metrics)
    }
}

impl Observer for Audit {
    fn on_step(&mut self, ev: &StepEvent<'_>) -> Result<(), ObserverStop> {
        self.steps = ev.step;
        self.rounds_seen = ev.round;
        if ev.routing_was_enabled {
            self.last_routing_round = ev.round;
        }
        let mut touched: Vec<GhostId> = Vec::new();
        for effect in ev.effects {
            let g = match effect {
                GhostEffect::Generated { ghost, .. }
                | GhostEffect::Copied { ghost, .. }
                | GhostEffect::Moved { ghost, .. }
                | GhostEffect::Erased { ghost, .. }
                | GhostEffect::Delivered { ghost, .. } => *ghost,
            };
            if !touched.contains(&g) {
                touched.push(g);
            }
            self.apply_effect(ev.step, ev.round, effect);
        }
        self.check_loss(ev.step, &touched);
        if self.world.protocol == Protocol::Ssmfp1 {
            self.check_color_locality(ev);
        }
        if self.cfg.monitor_caterpillars {
            self.check_caterpillars(ev, &touched);
        }
        if self.cfg.recount_every_step {
            self.recount(ev);
        }
        self.check_fairness(ev);
        if self.violation.is_some() {
            return Err(ObserverStop);
        }
        Ok(())
    }

    fn on_round_start(&mut self, _round: u64, config: &Configuration) {
        if self.cfg.saturation_window {
            self.snapshot_presence(config);
        }
    }
}

/// Fans one step event out to several observers; the first stop wins.
pub struct Observers<'a>(pub Vec<&'a mut dyn Observer>);

impl Observer for Observers<'_> {
    fn on_step(&mut self, ev: &StepEvent<'_>) -> Result<(), ObserverStop> {
        let mut stop = false;
        for obs in &mut self.0 {
            stop |= obs.on_step(ev).is_err();
        }
        if stop {
            Err(ObserverStop)
        } else {
            Ok(())
        }
    }

    fn on_round_start(&mut self, round: u64, config: &Configuration) {
        for obs in &mut self.0 {
            obs.on_round_start(round, config);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{clean_configuration, Protocol};
    use crate::kernel::{run, Daemon, DaemonPolicy, RunParams};
    use crate::message::PayloadTable;
    use crate::topology::{five_node_example, Topology};
    use crate::workload::{materialize, CorruptionSpec, SendSpec, WorkloadSpec};

    #[test]
    fn empty_workload_clean_start_passes_with_empty_ledger() {
        let w = World::new(five_node_example(), Protocol::Ssmfp1);
        let mut payloads = PayloadTable::default();
        let (c, origins) = materialize(
            &w,
            &WorkloadSpec::default(),
            &CorruptionSpec::default(),
            &mut payloads,
        )
        .unwrap();
        let mut audit = Audit::new(&w, &origins, AuditConfig::default());
        let mut daemon = Daemon::new(DaemonPolicy::Synchronous, w.topo.n());
        let report = run(&w, c, &mut daemon, &RunParams::default(), &mut audit).unwrap();
        assert_eq!(report.outcome, RunOutcome::Terminal);
        assert_eq!(report.steps, 0);
        let (verdict, metrics) = audit.finish(&report);
        assert_eq!(verdict, Verdict::Pass);
        assert!(metrics.ghosts.is_empty());
        assert!(amortized(&metrics).is_err());
    }

    #[test]
    fn single_message_two_nodes_delivers_exactly_once() {
        let topo = Topology::build(2, &[(0, 1)]).unwrap();
        for protocol in [Protocol::Ssmfp1, Protocol::Ssmfp2] {
            let w = World::new(topo.clone(), protocol);
            let mut payloads = PayloadTable::default();
            let m = payloads.intern("m");
            let wl = WorkloadSpec {
                sends: vec![SendSpec {
                    from: NodeId(0),
                    dest: NodeId(1),
                    payload: m,
                    available_at: 0,
                }],
            };
            let (c, origins) =
                materialize(&w, &wl, &CorruptionSpec::default(), &mut payloads).unwrap();
            let mut audit = Audit::new(
                &w,
                &origins,
                AuditConfig {
                    recount_every_step: true,
                    fairness_bound: Some(4),
                    ..Default::default()
                },
            );
            let mut daemon = Daemon::new(
                DaemonPolicy::WeaklyFair { seed: 5, bound: 4 },
                w.topo.n(),
            );
            let report = run(&w, c, &mut daemon, &RunParams::default(), &mut audit).unwrap();
            assert_eq!(report.outcome, RunOutcome::Terminal, "{protocol:?}");
            let (verdict, metrics) = audit.finish(&report);
            assert_eq!(verdict, Verdict::Pass, "{protocol:?}");
            assert_eq!(metrics.deliveries, 1);
            let gm = &metrics.ghosts[0];
            assert_eq!(gm.destination, NodeId(1));
            assert!(gm.delivered_step.is_some());
        }
    }

    #[test]
    fn ledger_flags_a_fabricated_duplicate() {
        let w = World::new(five_node_example(), Protocol::Ssmfp1);
        let origins = vec![crate::workload::GhostOrigin {
            ghost: GhostId::Valid(0),
            payload: crate::message::Payload(0),
            dest: NodeId(1),
            valid_source: Some(NodeId(2)),
            injected_at: None,
        }];
        let mut audit = Audit::new(&w, &origins, AuditConfig::default());
        let c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let fake = |step: u64, effects: Vec<GhostEffect>| StepEvent {
            step,
            round: 1,
            pre: &c,
            post: &c,
            chosen: &[],
            effects: Box::leak(effects.into_boxed_slice()),
            enabled_pre: &[],
            routing_was_enabled: false,
        };
        let g = GhostId::Valid(0);
        let at = SlotRef::RecvFor { proc: NodeId(2), dest: NodeId(1) };
        audit
            .on_step(&fake(
                1,
                vec![GhostEffect::Generated {
                    ghost: g,
                    at,
                    dest: NodeId(1),
                    payload: crate::message::Payload(0),
                }],
            ))
            .unwrap();
        audit
            .on_step(&fake(2, vec![GhostEffect::Delivered { ghost: g, at: NodeId(1) }]))
            .unwrap();
        let second = audit.on_step(&fake(3, vec![GhostEffect::Delivered { ghost: g, at: NodeId(1) }]));
        assert!(second.is_err());
        assert_eq!(audit.violation().unwrap().kind, ViolationKind::Duplication);
    }
}
