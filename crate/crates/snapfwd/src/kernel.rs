//! Execution kernel for the shared-memory state model. Each atomic step has
//! three phases: every guard is evaluated against the pre-state, a daemon
//! chooses a nonempty set of enabled processors (one enabled action each),
//! and all chosen statements are applied simultaneously against the
//! pre-state. The table-repair layer has priority: a processor with an
//! enabled routing action never exposes its forwarding actions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{Configuration, RoutingMode, World};
use crate::message::GhostEffect;
use crate::routing;
use crate::rules::{Rule, RuleInstance};
use crate::ssmfp1;
use crate::ssmfp2;
use crate::topology::NodeId;
use crate::workload;

/// Enabled instances at one processor, routing priority applied.
pub fn enabled_for_proc(world: &World, c: &Configuration, p: NodeId) -> Vec<RuleInstance> {
    let table_rules = routing::routing_enabled(world, c, p);
    if !table_rules.is_empty() {
        return table_rules;
    }
    match world.protocol {
        crate::config::Protocol::Ssmfp1 => ssmfp1::enabled_rules(world, c, p),
        crate::config::Protocol::Ssmfp2 => ssmfp2::enabled_rules(world, c, p),
    }
}

/// All enabled instances, sorted by (processor, rule identifier).
pub fn enabled(world: &World, c: &Configuration) -> Vec<RuleInstance> {
    let mut out = Vec::new();
    for p in world.topo.nodes() {
        out.extend(enabled_for_proc(world, c, p));
    }
    out
}

pub fn instance_enabled(world: &World, c: &Configuration, inst: &RuleInstance) -> bool {
    match inst.rule {
        Rule::Routing => {
            world.routing_mode == RoutingMode::Managed && routing::is_enabled(world, c, inst.proc)
        }
        Rule::RoutingRepair => world.routing_mode == RoutingMode::Scripted,
        Rule::P1 { rule, dest } => {
            routing::routing_enabled(world, c, inst.proc).is_empty()
                && ssmfp1::is_enabled(world, c, inst.proc, rule, dest)
        }
        Rule::P2 { rule, rank } => {
            routing::routing_enabled(world, c, inst.proc).is_empty()
                && ssmfp2::is_enabled(world, c, inst.proc, rule, rank)
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    /// A selected instance's guard does not hold in the pre-state. Selection
    /// and application happen in one atomic step, so this is a bug detector,
    /// not a recoverable condition.
    #[error("stale guard: {0} not enabled in the pre-state")]
    StaleGuard(RuleInstance),
    #[error("processor {0} selected twice in one step")]
    DuplicateProcessor(NodeId),
    #[error("empty selection while processors are enabled")]
    EmptySelection,
}

/// Applies one atomic step: every selected statement reads the pre-state
/// `c` and writes its own processor's slice of the post-state.
pub fn step(
    world: &World,
    c: &Configuration,
    sel: &[RuleInstance],
) -> Result<(Configuration, Vec<GhostEffect>), KernelError> {
    let mut seen = vec![false; world.topo.n()];
    for inst in sel {
        if std::mem::replace(&mut seen[inst.proc.index()], true) {
            return Err(KernelError::DuplicateProcessor(inst.proc));
        }
        if !instance_enabled(world, c, inst) {
            return Err(KernelError::StaleGuard(*inst));
        }
    }
    let mut post = c.clone();
    post.step = c.step + 1;
    let mut effects = Vec::new();
    for inst in sel {
        match inst.rule {
            Rule::Routing => routing::apply(world, c, &mut post, inst.proc),
            Rule::RoutingRepair => routing::apply_repair(world, &mut post, inst.proc),
            Rule::P1 { rule, dest } => {
                ssmfp1::apply(world, c, &mut post, inst.proc, rule, dest, &mut effects)
            }
            Rule::P2 { rule, rank } => {
                ssmfp2::apply(world, c, &mut post, inst.proc, rule, rank, &mut effects)
            }
        }
    }
    Ok((post, effects))
}

/// Daemon selection policy. The daemon picks processors; when a chosen
/// processor has several enabled rules the non-exhaustive policies take the
/// lowest rule identifier, so runs replay exactly.
#[derive(Debug, Clone)]
pub enum DaemonPolicy {
    /// Random nonempty subset each step; a processor continuously enabled
    /// and unchosen for `bound` steps is force-included.
    WeaklyFair { seed: u64, bound: u32 },
    /// Single processor per step with a strong bias toward repeating the
    /// previous pick; starves everyone it legally can.
    AdversarialUnfair { seed: u64 },
    /// Every enabled processor acts every step.
    Synchronous,
    /// Replay an explicit per-step instance list.
    Scripted { steps: Vec<Vec<RuleInstance>> },
}

#[derive(Debug)]
pub struct Daemon {
    policy: DaemonPolicy,
    rng: ChaCha8Rng,
    starve: Vec<u32>,
    last_pick: Option<NodeId>,
    cursor: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DaemonError {
    #[error("script exhausted after {0} steps")]
    ScriptExhausted(usize),
}

impl Daemon {
    pub fn new(policy: DaemonPolicy, n: usize) -> Self {
        let seed = match &policy {
            DaemonPolicy::WeaklyFair { seed, .. } | DaemonPolicy::AdversarialUnfair { seed } => {
                *seed
            }
            _ => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        Daemon {
            policy,
            rng,
            starve: vec![0; n],
            last_pick: None,
            cursor: 0,
        }
    }

    /// Chooses the instances for the next step. `enabled` is sorted by
    /// (processor, rule), so the first instance of a processor's group is
    /// its lowest-order rule.
    pub fn select(
        &mut self,
        enabled: &[RuleInstance],
    ) -> Result<Vec<RuleInstance>, DaemonError> {
        debug_assert!(!enabled.is_empty() || matches!(self.policy, DaemonPolicy::Scripted { .. }));
        let mut firsts: Vec<RuleInstance> = Vec::new();
        for inst in enabled {
            if firsts.last().map(|f| f.proc) != Some(inst.proc) {
                firsts.push(*inst);
            }
        }
        match &self.policy {
            DaemonPolicy::Synchronous => Ok(firsts),
            DaemonPolicy::WeaklyFair { bound, .. } => {
                let bound = *bound;
                let mut sel: Vec<RuleInstance> = firsts
                    .iter()
                    .copied()
                    .filter(|inst| {
                        let forced = self.starve[inst.proc.index()] + 1 >= bound;
                        forced || self.rng.random::<f64>() < 0.5
                    })
                    .collect();
                if sel.is_empty() {
                    let i = self.rng.random_range(0..firsts.len());
                    sel.push(firsts[i]);
                }
                for inst in &firsts {
                    let s = &mut self.starve[inst.proc.index()];
                    if sel.iter().any(|x| x.proc == inst.proc) {
                        *s = 0;
                    } else {
                        *s += 1;
                    }
                }
                // A processor that fell out of the enabled set restarts its
                // continuous-enablement clock.
                let enabled_now: Vec<bool> = {
                    let mut v = vec![false; self.starve.len()];
                    for inst in &firsts {
                        v[inst.proc.index()] = true;
                    }
                    v
                };
                for (i, e) in enabled_now.iter().enumerate() {
                    if !e {
                        self.starve[i] = 0;
                    }
                }
                Ok(sel)
            }
            DaemonPolicy::AdversarialUnfair { .. } => {
                let repeat = self
                    .last_pick
                    .filter(|p| firsts.iter().any(|inst| inst.proc == *p))
                    .filter(|_| self.rng.random::<f64>() < 0.75);
                let pick = match repeat {
                    Some(p) => firsts.iter().find(|inst| inst.proc == p).copied().unwrap(),
                    None => firsts[self.rng.random_range(0..firsts.len())],
                };
                self.last_pick = Some(pick.proc);
                Ok(vec![pick])
            }
            DaemonPolicy::Scripted { steps } => {
                let i = self.cursor;
                if i >= steps.len() {
                    return Err(DaemonError::ScriptExhausted(i));
                }
                self.cursor += 1;
                Ok(steps[i].clone())
            }
        }
    }

    pub fn script_len(&self) -> Option<usize> {
        match &self.policy {
            DaemonPolicy::Scripted { steps } => Some(steps.len()),
            _ => None,
        }
    }

    fn cursor_pos(&self) -> usize {
        self.cursor
    }
}

/// Round accounting per the neutralization definition: a round ends once
/// every processor enabled at its start has executed an action or been
/// neutralized (enabled before some step, disabled after it, without
/// acting).
#[derive(Debug, Default)]
pub struct RoundTracker {
    outstanding: Vec<bool>,
    active: bool,
}

impl RoundTracker {
    pub fn new(n: usize) -> Self {
        RoundTracker {
            outstanding: vec![false; n],
            active: false,
        }
    }

    /// Starts a round at the current enabled set if none is in progress.
    pub fn ensure_round(&mut self, enabled_procs: &[bool]) {
        if !self.active {
            self.outstanding.copy_from_slice(enabled_procs);
            self.active = self.outstanding.iter().any(|&b| b);
        }
    }

    /// Accounts one step; returns true when it completed the round.
    pub fn finish_step(
        &mut self,
        acted: &[bool],
        enabled_pre: &[bool],
        enabled_post: &[bool],
    ) -> bool {
        if !self.active {
            return false;
        }
        for i in 0..self.outstanding.len() {
            if self.outstanding[i] && (acted[i] || (enabled_pre[i] && !enabled_post[i])) {
                self.outstanding[i] = false;
            }
        }
        if self.outstanding.iter().all(|&b| !b) {
            self.active = false;
            true
        } else {
            false
        }
    }
}

/// Synthetic per-step view for standalone round counting.
#[derive(Debug, Clone)]
pub struct RoundStepInfo {
    pub enabled_pre: Vec<bool>,
    pub acted: Vec<bool>,
    pub enabled_post: Vec<bool>,
}

/// Counts completed rounds over a trace of step summaries.
pub fn count_rounds(n: usize, steps: &[RoundStepInfo]) -> u64 {
    let mut tracker = RoundTracker::new(n);
    let mut rounds = 0;
    for s in steps {
        tracker.ensure_round(&s.enabled_pre);
        if tracker.finish_step(&s.acted, &s.enabled_pre, &s.enabled_post) {
            rounds += 1;
        }
    }
    rounds
}

/// Everything an observer sees about one executed step.
pub struct StepEvent<'a> {
    /// Step index of the post-state (1-based).
    pub step: u64,
    /// 1-based round the step belongs to.
    pub round: u64,
    pub pre: &'a Configuration,
    pub post: &'a Configuration,
    pub chosen: &'a [RuleInstance],
    pub effects: &'a [GhostEffect],
    pub enabled_pre: &'a [RuleInstance],
    /// Whether any routing instance was enabled in the pre-state.
    pub routing_was_enabled: bool,
}

/// Streaming consumer of a run. Returning an error stops the run with
/// `RunOutcome::Stopped`; the observer keeps its own reason.
pub trait Observer {
    fn on_step(&mut self, ev: &StepEvent<'_>) -> Result<(), ObserverStop>;
    /// Called when a round begins, with its 1-based index and the
    /// configuration at its start.
    fn on_round_start(&mut self, _round: u64, _config: &Configuration) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObserverStop;

/// No-op observer.
pub struct NullObserver;

impl Observer for NullObserver {
    fn on_step(&mut self, _ev: &StepEvent<'_>) -> Result<(), ObserverStop> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    /// No action enabled and no send still scheduled.
    Terminal,
    /// Scripted daemon consumed its whole script.
    ScriptEnd,
    /// Clean stop at the requested round count.
    RoundLimit,
    /// Step budget exhausted before termination; distinct from terminal.
    StepBudget,
    /// An observer requested the stop (violation witnessed).
    Stopped,
}

#[derive(Debug, Clone)]
pub struct RunParams {
    pub max_steps: u64,
    /// Stop cleanly once this many rounds completed (0 = no limit).
    pub stop_rounds: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            max_steps: 1_000_000,
            stop_rounds: 0,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub outcome: RunOutcome,
    pub steps: u64,
    pub rounds: u64,
    pub final_config: Configuration,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn proc_bitmap(n: usize, instances: &[RuleInstance]) -> Vec<bool> {
    let mut v = vec![false; n];
    for inst in instances {
        v[inst.proc.index()] = true;
    }
    v
}

/// Drives a maximal execution: handshake, guard evaluation, daemon choice,
/// atomic application, repeated until a terminal configuration, the script
/// end, a round limit, or the step budget.
pub fn run(
    world: &World,
    mut c: Configuration,
    daemon: &mut Daemon,
    params: &RunParams,
    obs: &mut dyn Observer,
) -> Result<RunReport, RunError> {
    let n = world.topo.n();
    let mut tracker = RoundTracker::new(n);
    let mut rounds: u64 = 0;
    let mut steps: u64 = 0;
    let mut pending_round_end: Option<(Vec<bool>, Vec<bool>)> = None;
    let mut round_open = false;

    loop {
        workload::handshake_all(world, &mut c);
        let enabled_now = enabled(world, &c);
        let enabled_procs = proc_bitmap(n, &enabled_now);

        if let Some((acted, en_pre)) = pending_round_end.take() {
            if tracker.finish_step(&acted, &en_pre, &enabled_procs) {
                rounds += 1;
                round_open = false;
                if params.stop_rounds > 0 && rounds >= params.stop_rounds {
                    return Ok(RunReport {
                        outcome: RunOutcome::RoundLimit,
                        steps,
                        rounds,
                        final_config: c,
                    });
                }
            }
        }

        if enabled_now.is_empty() {
            if let Some(arrival) = c.next_arrival() {
                // Nothing enabled until the next scheduled send shows up.
                c.step = arrival;
                continue;
            }
            if daemon.script_len().is_some_and(|len| daemon.cursor_pos() < len) {
                // Script steps remain but nothing is enabled: surface the
                // stale entry instead of silently terminating.
                let sel = daemon.select(&enabled_now).expect("script remains");
                if let Some(first) = sel.first() {
                    return Err(RunError::Kernel(KernelError::StaleGuard(*first)));
                }
            }
            return Ok(RunReport {
                outcome: RunOutcome::Terminal,
                steps,
                rounds,
                final_config: c,
            });
        }

        if steps >= params.max_steps {
            return Ok(RunReport {
                outcome: RunOutcome::StepBudget,
                steps,
                rounds,
                final_config: c,
            });
        }

        if !round_open {
            tracker.ensure_round(&enabled_procs);
            round_open = true;
            obs.on_round_start(rounds + 1, &c);
        }

        let sel = match daemon.select(&enabled_now) {
            Ok(sel) => sel,
            Err(DaemonError::ScriptExhausted(_)) => {
                return Ok(RunReport {
                    outcome: RunOutcome::ScriptEnd,
                    steps,
                    rounds,
                    final_config: c,
                })
            }
        };
        if sel.is_empty() {
            return Err(RunError::Kernel(KernelError::EmptySelection));
        }

        let routing_was_enabled = enabled_now
            .iter()
            .any(|i| matches!(i.rule, Rule::Routing));
        let (post, effects) = step(world, &c, &sel)?;
        steps += 1;

        let ev = StepEvent {
            step: post.step,
            round: rounds + 1,
            pre: &c,
            post: &post,
            chosen: &sel,
            effects: &effects,
            enabled_pre: &enabled_now,
            routing_was_enabled,
        };
        let stop = obs.on_step(&ev).is_err();

        let acted = proc_bitmap(n, &sel);
        pending_round_end = Some((acted, enabled_procs));
        c = post;

        if stop {
            return Ok(RunReport {
                outcome: RunOutcome::Stopped,
                steps,
                rounds,
                final_config: c,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{clean_configuration, Protocol};
    use crate::message::{GhostId, Msg1, Payload};
    use crate::rules::P1Rule;
    use crate::topology::five_node_example;

    const A: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);
    const C: NodeId = NodeId(2);

    fn world() -> World {
        World::new(five_node_example(), Protocol::Ssmfp1)
    }

    fn msg(payload: u32, last: NodeId, color: u8, g: GhostId) -> Msg1 {
        Msg1 {
            payload: Payload(payload),
            last_hop: last,
            color,
            ghost: g,
        }
    }

    #[test]
    fn terminal_configuration_has_nothing_enabled() {
        let w = world();
        let c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        assert!(enabled(&w, &c).is_empty());
    }

    #[test]
    fn correct_table_override_exposes_generation() {
        // With a corrupted own entry, only the table rule shows at c; after
        // overriding the tables to correct values, the waiting send's
        // generation rule appears instead.
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.pending[C.index()].push_back(crate::config::PendingSend {
            payload: Payload(0),
            dest: B,
            available_at: 0,
            ghost: GhostId::Valid(0),
        });
        crate::workload::handshake_all(&w, &mut c);
        assert!(c.request[C.index()]);
        let mut corrupted = c.clone();
        corrupted.routing[C.index()].entries[B.index()].next_hop = Some(A);
        let at_c = enabled_for_proc(&w, &corrupted, C);
        assert!(at_c.iter().all(|i| i.rule == Rule::Routing));
        let r1 = RuleInstance {
            proc: C,
            rule: Rule::P1 {
                rule: P1Rule::R1,
                dest: B,
            },
        };
        assert!(enabled(&w, &c).contains(&r1));
    }

    #[test]
    fn routing_priority_masks_forwarding() {
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        // A full emission buffer at c would enable forwarding at b, and a
        // corrupted own table masks everything at c.
        c.proto.p1_mut()[C.index()].buf_e[B.index()] = Some(msg(0, C, 1, GhostId::Invalid(0)));
        c.routing[C.index()].entries[B.index()].dist_est = 7;
        let at_c = enabled_for_proc(&w, &c, C);
        assert!(!at_c.is_empty());
        assert!(at_c
            .iter()
            .all(|i| matches!(i.rule, Rule::Routing)));
    }

    #[test]
    fn step_rejects_stale_guards_and_duplicates() {
        let w = world();
        let c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let bogus = RuleInstance {
            proc: C,
            rule: Rule::P1 {
                rule: P1Rule::R6,
                dest: C,
            },
        };
        assert_eq!(
            step(&w, &c, &[bogus]).unwrap_err(),
            KernelError::StaleGuard(bogus)
        );
        let mut c2 = c.clone();
        c2.proto.p1_mut()[C.index()].buf_e[C.index()] = Some(msg(0, C, 1, GhostId::Invalid(0)));
        c2.proto.p1_mut()[C.index()].buf_r[B.index()] = Some(msg(1, C, 0, GhostId::Invalid(1)));
        let r6 = RuleInstance {
            proc: C,
            rule: Rule::P1 {
                rule: P1Rule::R6,
                dest: C,
            },
        };
        let r2 = RuleInstance {
            proc: C,
            rule: Rule::P1 {
                rule: P1Rule::R2,
                dest: B,
            },
        };
        assert_eq!(
            step(&w, &c2, &[r6, r2]).unwrap_err(),
            KernelError::DuplicateProcessor(C)
        );
    }

    #[test]
    fn simultaneous_independent_rules_commute_with_sequential_orders() {
        // Two processors on disjoint state: applying both in one step
        // matches either sequential order.
        let w = world();
        let mut c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        c.proto.p1_mut()[A.index()].buf_r[B.index()] = Some(msg(0, A, 0, GhostId::Invalid(0)));
        c.proto.p1_mut()[NodeId(4).index()].buf_r[NodeId(3).index()] =
            Some(msg(1, NodeId(4), 0, GhostId::Invalid(1)));
        let ia = RuleInstance {
            proc: A,
            rule: Rule::P1 {
                rule: P1Rule::R2,
                dest: B,
            },
        };
        let ie = RuleInstance {
            proc: NodeId(4),
            rule: Rule::P1 {
                rule: P1Rule::R2,
                dest: NodeId(3),
            },
        };
        let (both, _) = step(&w, &c, &[ia, ie]).unwrap();
        let (first_a, _) = step(&w, &c, &[ia]).unwrap();
        let (then_e, _) = step(&w, &first_a, &[ie]).unwrap();
        let (first_e, _) = step(&w, &c, &[ie]).unwrap();
        let (then_a, _) = step(&w, &first_e, &[ia]).unwrap();
        assert_eq!(both.stable_hash(), then_e.stable_hash());
        assert_eq!(both.stable_hash(), then_a.stable_hash());
    }

    #[test]
    fn empty_step_on_terminal_is_identity() {
        let w = world();
        let c = clean_configuration(&w.topo, Protocol::Ssmfp1);
        let (post, effects) = step(&w, &c, &[]).unwrap();
        assert!(effects.is_empty());
        assert_eq!(post.stable_hash(), c.stable_hash());
    }

    #[test]
    fn synchronous_rounds_equal_steps() {
        // Under the all-enabled daemon every round is exactly one step.
        let steps = vec![
            RoundStepInfo {
                enabled_pre: vec![true, true, false],
                acted: vec![true, true, false],
                enabled_post: vec![true, false, false],
            },
            RoundStepInfo {
                enabled_pre: vec![true, false, false],
                acted: vec![true, false, false],
                enabled_post: vec![false, false, false],
            },
        ];
        assert_eq!(count_rounds(3, &steps), 2);
    }

    #[test]
    fn neutralization_closes_a_round() {
        // p0 is enabled at round start, never acts, and becomes disabled at
        // step 2: the round ends there.
        let steps = [RoundStepInfo {
                enabled_pre: vec![true, true, false],
                acted: vec![false, true, false],
                enabled_post: vec![true, true, false],
            },
            RoundStepInfo {
                enabled_pre: vec![true, true, false],
                acted: vec![false, true, false],
                enabled_post: vec![false, true, false],
            },
            RoundStepInfo {
                enabled_pre: vec![false, true, false],
                acted: vec![false, true, false],
                enabled_post: vec![false, true, false],
            }];
        assert_eq!(count_rounds(3, &steps[..1]), 0);
        assert_eq!(count_rounds(3, &steps[..2]), 1);
    }

    #[test]
    fn empty_trace_has_zero_rounds() {
        assert_eq!(count_rounds(3, &[]), 0);
    }
}
