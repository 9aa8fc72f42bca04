//! Scenario files: a human-editable TOML format that, together with the
//! binary version, fully determines a trace. Unknown keys are rejected.
//! The formal schema lives in `docs/scenario-schema.md`.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::config::{
    Configuration, Protocol, RouteEntry, RoutingMode, World,
};
use crate::kernel::{Daemon, DaemonPolicy, RunParams};
use crate::message::{AckKind, PayloadTable};
use crate::rules::{Mutant, P1Rule, P2Rule, Rule, RuleInstance};
use crate::topology::{NodeId, Topology};
use crate::verifier::explore::ExploreParams;
use crate::verifier::{AuditConfig, DeliveryBudget};
use crate::workload::{
    materialize, CorruptionSpec, GhostOrigin, Placement, SendSpec, WorkloadSpec,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

// ---------------------------------------------------------------------------
// Raw TOML shapes
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NodeRef {
    Id(u16),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyToml {
    nodes: Option<Vec<String>>,
    n: Option<u16>,
    edges: Vec<(NodeRef, NodeRef)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DaemonToml {
    kind: String,
    seed: Option<u64>,
    fairness_bound: Option<u32>,
    #[serde(default)]
    script: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoutingSetToml {
    proc: NodeRef,
    dest: NodeRef,
    next_hop: NodeRef,
    dist_est: Option<u16>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RoutingToml {
    mode: Option<String>,
    #[serde(default)]
    set: Vec<RoutingSetToml>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SendToml {
    from: NodeRef,
    to: NodeRef,
    payload: Option<String>,
    available_at: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateToml {
    count: u32,
    seed: Option<u64>,
    every_k: Option<u64>,
    to: Option<NodeRef>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct WorkloadToml {
    #[serde(default)]
    send: Vec<SendToml>,
    generate: Option<GenerateToml>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaceToml {
    proc: NodeRef,
    payload: String,
    // destination-based scheme fields
    buf: Option<String>,
    dest: Option<NodeRef>,
    last_hop: Option<NodeRef>,
    color: Option<u8>,
    // distance-based scheme fields
    rank: Option<u8>,
    next: Option<NodeRef>,
    last: Option<NodeRef>,
    #[serde(rename = "type")]
    kind: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CorruptionToml {
    seed: Option<u64>,
    routing_severity: Option<f64>,
    inject: Option<u32>,
    ranks: Option<Vec<u8>>,
    scramble_queues: Option<bool>,
    #[serde(default)]
    place: Vec<PlaceToml>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BudgetsToml {
    max_steps: Option<u64>,
    stop_rounds: Option<u64>,
    delivery_budget: Option<toml::Value>,
    saturation_window: Option<bool>,
    fairness_check: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CheckToml {
    depth: Option<u32>,
    state_budget: Option<usize>,
    injections: Option<String>,
    #[serde(default)]
    payloads: Vec<String>,
    routing_family: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MutantsToml {
    #[serde(default)]
    rules: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioToml {
    name: Option<String>,
    protocol: String,
    topology: TopologyToml,
    daemon: Option<DaemonToml>,
    #[serde(default)]
    routing: RoutingToml,
    #[serde(default)]
    workload: WorkloadToml,
    #[serde(default)]
    corruption: CorruptionToml,
    #[serde(default)]
    budgets: BudgetsToml,
    #[serde(default)]
    check: CheckToml,
    #[serde(default)]
    mutants: MutantsToml,
}

// ---------------------------------------------------------------------------
// Resolved scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum DaemonKind {
    WeaklyFair,
    Adversarial,
    Synchronous,
    Scripted(Vec<Vec<RuleInstance>>),
}

#[derive(Debug, Clone)]
pub struct DaemonSpec {
    pub kind: DaemonKind,
    pub seed: Option<u64>,
    pub fairness_bound: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct GenerateSpec {
    pub count: u32,
    pub seed: Option<u64>,
    pub every_k: u64,
    pub to: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckInjections {
    None,
    SingleSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckRoutingFamily {
    CorrectOnly,
    NextHopCombos,
}

#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub depth: u32,
    pub state_budget: usize,
    pub injections: CheckInjections,
    pub payloads: Vec<String>,
    pub routing_family: CheckRoutingFamily,
}

/// A parsed, name-resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    pub topo: Topology,
    pub labels: Vec<String>,
    pub daemon: DaemonSpec,
    pub routing_mode: RoutingMode,
    pub routing_sets: Vec<(NodeId, NodeId, RouteEntry)>,
    pub sends: Vec<(NodeId, NodeId, String, u64)>,
    pub generate: Option<GenerateSpec>,
    pub corruption_seed: Option<u64>,
    pub routing_severity: f64,
    pub inject: u32,
    pub inject_ranks: Option<Vec<u8>>,
    pub scramble_queues: bool,
    pub placements_raw: Vec<(Placement, String)>,
    pub max_steps: u64,
    pub stop_rounds: u64,
    pub delivery_budget: DeliveryBudget,
    pub saturation_window: bool,
    pub fairness_check: bool,
    pub check: CheckSpec,
    pub mutants: Vec<Mutant>,
}

/// Everything needed to execute one seeded run of a scenario.
pub struct PreparedRun {
    pub world: World,
    pub initial: Configuration,
    pub origins: Vec<GhostOrigin>,
    pub daemon: Daemon,
    pub params: RunParams,
    pub audit: AuditConfig,
    pub payloads: PayloadTable,
}

struct NameMap {
    labels: Vec<String>,
}

impl NameMap {
    fn resolve(&self, r: &NodeRef) -> Result<NodeId, ScenarioError> {
        match r {
            NodeRef::Id(i) => {
                if (*i as usize) < self.labels.len() {
                    Ok(NodeId(*i))
                } else {
                    Err(invalid(format!("node id {i} out of range")))
                }
            }
            NodeRef::Name(s) => self.lookup(s),
        }
    }

    fn lookup(&self, s: &str) -> Result<NodeId, ScenarioError> {
        if let Some(i) = self.labels.iter().position(|l| l == s) {
            return Ok(NodeId(i as u16));
        }
        if let Ok(i) = s.parse::<u16>() {
            if (i as usize) < self.labels.len() {
                return Ok(NodeId(i));
            }
        }
        Err(invalid(format!("unknown node '{s}'")))
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Scenario, ScenarioError> {
        let raw: ScenarioToml = toml::from_str(text).map_err(|source| ScenarioError::Parse {
            path: path.to_string(),
            source: Box::new(source),
        })?;
        resolve(raw)
    }

    pub fn label(&self, p: NodeId) -> &str {
        &self.labels[p.index()]
    }

    /// Effective seeds: explicit scenario values win over the run seed.
    pub fn daemon_seed(&self, run_seed: u64) -> u64 {
        self.daemon.seed.unwrap_or(run_seed)
    }

    pub fn corruption_seed(&self, run_seed: u64) -> u64 {
        self.corruption_seed.unwrap_or(run_seed)
    }

    pub fn fairness_bound(&self) -> u32 {
        self.daemon
            .fairness_bound
            .unwrap_or(2 * self.topo.n() as u32)
    }

    pub fn world(&self) -> World {
        let mut world = World::new(self.topo.clone(), self.protocol);
        world.routing_mode = self.routing_mode;
        for m in &self.mutants {
            world.mutants.enable(*m);
        }
        world
    }

    /// Builds the initial configuration and per-run machinery for `seed`.
    pub fn prepare(&self, run_seed: u64) -> Result<PreparedRun, ScenarioError> {
        let world = self.world();
        let mut payloads = PayloadTable::default();
        let mut sends: Vec<SendSpec> = self
            .sends
            .iter()
            .map(|(from, dest, payload, at)| SendSpec {
                from: *from,
                dest: *dest,
                payload: payloads.intern(payload),
                available_at: *at,
            })
            .collect();
        if let Some(generate) = &self.generate {
            let seed = generate.seed.unwrap_or(run_seed);
            let generated = crate::workload::generate_sends(
                &world,
                seed,
                generate.count,
                generate.every_k,
                generate.to,
                &mut payloads,
            );
            sends.extend(generated.sends);
        }
        let workload = WorkloadSpec { sends };
        let corruption = CorruptionSpec {
            seed: self.corruption_seed(run_seed),
            routing_severity: self.routing_severity,
            inject: self.inject,
            rank_domain: self.inject_ranks.clone(),
            scramble_queues: self.scramble_queues,
            placements: {
                let mut out = Vec::new();
                for (p, payload_name) in &self.placements_raw {
                    let mut p = *p;
                    let interned = payloads.intern(payload_name);
                    match &mut p {
                        Placement::P1 { payload, .. } => *payload = interned,
                        Placement::P2 { payload, .. } => *payload = interned,
                    }
                    out.push(p);
                }
                out
            },
        };
        let (mut initial, origins) = materialize(&world, &workload, &corruption, &mut payloads)
            .map_err(|e| invalid(e.to_string()))?;
        for (p, d, entry) in &self.routing_sets {
            initial.routing[p.index()].entries[d.index()] = *entry;
        }
        let bound = self.fairness_bound();
        let policy = match &self.daemon.kind {
            DaemonKind::WeaklyFair => DaemonPolicy::WeaklyFair {
                seed: self.daemon_seed(run_seed),
                bound,
            },
            DaemonKind::Adversarial => DaemonPolicy::AdversarialUnfair {
                seed: self.daemon_seed(run_seed),
            },
            DaemonKind::Synchronous => DaemonPolicy::Synchronous,
            DaemonKind::Scripted(steps) => DaemonPolicy::Scripted {
                steps: steps.clone(),
            },
        };
        let daemon = Daemon::new(policy, self.topo.n());
        let params = RunParams {
            max_steps: self.max_steps,
            stop_rounds: self.stop_rounds,
        };
        let audit = AuditConfig {
            delivery_budget: self.delivery_budget,
            saturation_window: self.saturation_window,
            recount_every_step: false,
            fairness_bound: if self.fairness_check
                && matches!(self.daemon.kind, DaemonKind::WeaklyFair)
            {
                Some(bound)
            } else {
                None
            },
            monitor_caterpillars: true,
        };
        Ok(PreparedRun {
            world,
            initial,
            origins,
            daemon,
            params,
            audit,
            payloads,
        })
    }

    /// Root configurations for exhaustive checking: every single-slot flag
    /// injection (or none) crossed with every single-entry next-hop
    /// deviation (or the correct tables). The cross matters: the erase
    /// rules' multi-copy clauses only bite when a stray copy coexists with
    /// a table that moves under it.
    pub fn check_roots(
        &self,
    ) -> Result<Vec<(Configuration, Vec<GhostOrigin>)>, ScenarioError> {
        if self.topo.n() > 3 {
            return Err(invalid(format!(
                "exhaustive checking requires n <= 3, scenario has n = {}",
                self.topo.n()
            )));
        }
        if self.generate.is_some() {
            return Err(invalid("exhaustive checking needs an explicit send list"));
        }
        if self.sends.iter().any(|(_, _, _, at)| *at > 0) {
            return Err(invalid("exhaustive checking needs all-at-start sends"));
        }
        let world = self.world();
        let base = |placements: Vec<Placement>,
                    payloads: &mut PayloadTable|
         -> Result<(Configuration, Vec<GhostOrigin>), ScenarioError> {
            let sends: Vec<SendSpec> = self
                .sends
                .iter()
                .map(|(from, dest, payload, at)| SendSpec {
                    from: *from,
                    dest: *dest,
                    payload: payloads.intern(payload),
                    available_at: *at,
                })
                .collect();
            let workload = WorkloadSpec { sends };
            let corruption = CorruptionSpec {
                placements,
                ..Default::default()
            };
            materialize(&world, &workload, &corruption, payloads)
                .map_err(|e| invalid(e.to_string()))
        };

        // Table variants: canonical, plus one deviated next-hop entry.
        let mut table_variants: Vec<Option<(NodeId, NodeId, NodeId)>> = vec![None];
        if self.check.routing_family == CheckRoutingFamily::NextHopCombos {
            for p in self.topo.nodes() {
                for d in self.topo.nodes() {
                    if p == d {
                        continue;
                    }
                    let canonical = self.topo.canonical_next_hop(p, d);
                    for &nb in self.topo.neighbors(p) {
                        if Some(nb) != canonical {
                            table_variants.push(Some((p, d, nb)));
                        }
                    }
                }
            }
        }

        // Injection variants: none, plus one occupied slot per flag combo.
        let mut payloads = PayloadTable::default();
        let mut injections: Vec<Option<Placement>> = vec![None];
        let tags: Vec<String> = match self.check.injections {
            CheckInjections::None => Vec::new(),
            CheckInjections::SingleSlot if self.check.payloads.is_empty() => {
                vec!["x".to_string()]
            }
            CheckInjections::SingleSlot => self.check.payloads.clone(),
        };
        for tag in &tags {
            let payload = payloads.intern(tag);
            match self.protocol {
                Protocol::Ssmfp1 => {
                    let delta = self.topo.max_degree() as u8;
                    for p in self.topo.nodes() {
                        let mut hops: Vec<NodeId> = self.topo.neighbors(p).to_vec();
                        hops.push(p);
                        for d in self.topo.nodes() {
                            for emission in [false, true] {
                                for &last_hop in &hops {
                                    for color in 0..=delta {
                                        injections.push(Some(Placement::P1 {
                                            proc: p,
                                            emission,
                                            dest: d,
                                            payload,
                                            last_hop,
                                            color,
                                        }));
                                    }
                                }
                            }
                        }
                    }
                }
                Protocol::Ssmfp2 => {
                    for p in self.topo.nodes() {
                        let nbs = self.topo.neighbors(p).to_vec();
                        if nbs.is_empty() {
                            continue;
                        }
                        for rank in 1..=world.rank_count() {
                            for &next in &nbs {
                                for &last in &nbs {
                                    for d in self.topo.nodes() {
                                        for kind in [AckKind::S, AckKind::A, AckKind::F] {
                                            injections.push(Some(Placement::P2 {
                                                proc: p,
                                                rank,
                                                payload,
                                                next,
                                                last,
                                                dest: d,
                                                kind,
                                            }));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let mut roots = Vec::with_capacity(table_variants.len() * injections.len());
        for variant in &table_variants {
            for injection in &injections {
                let placements = injection.iter().copied().collect();
                let (mut cfg, origins) = base(placements, &mut payloads)?;
                if let Some((p, d, nb)) = variant {
                    cfg.routing[p.index()].entries[d.index()].next_hop = Some(*nb);
                }
                roots.push((cfg, origins));
            }
        }
        Ok(roots)
    }

    pub fn explore_params(&self) -> ExploreParams {
        ExploreParams {
            depth: self.check.depth,
            state_budget: self.check.state_budget,
        }
    }
}

fn resolve(raw: ScenarioToml) -> Result<Scenario, ScenarioError> {
    let protocol = match raw.protocol.as_str() {
        "ssmfp1" => Protocol::Ssmfp1,
        "ssmfp2" => Protocol::Ssmfp2,
        other => return Err(invalid(format!("unknown protocol '{other}'"))),
    };

    let labels: Vec<String> = match (&raw.topology.nodes, raw.topology.n) {
        (Some(names), _) => names.clone(),
        (None, Some(n)) => (0..n).map(|i| i.to_string()).collect(),
        (None, None) => return Err(invalid("topology needs `nodes` or `n`")),
    };
    let names = NameMap {
        labels: labels.clone(),
    };
    let mut edges = Vec::new();
    for (a, b) in &raw.topology.edges {
        edges.push((names.resolve(a)?.0, names.resolve(b)?.0));
    }
    let topo = Topology::build(labels.len(), &edges).map_err(|e| invalid(e.to_string()))?;

    let routing_mode = match raw.routing.mode.as_deref() {
        None | Some("managed") => RoutingMode::Managed,
        Some("scripted") => RoutingMode::Scripted,
        Some(other) => return Err(invalid(format!("unknown routing mode '{other}'"))),
    };

    let daemon = match &raw.daemon {
        None => DaemonSpec {
            kind: DaemonKind::WeaklyFair,
            seed: None,
            fairness_bound: None,
        },
        Some(d) => {
            let kind = match d.kind.as_str() {
                "weakly-fair" => DaemonKind::WeaklyFair,
                "adversarial" => DaemonKind::Adversarial,
                "synchronous" => DaemonKind::Synchronous,
                "scripted" => {
                    let mut steps = Vec::new();
                    for (i, line) in d.script.iter().enumerate() {
                        steps.push(parse_script_step(line, &names, &topo, protocol).map_err(
                            |e| match e {
                                ScenarioError::Invalid(msg) => {
                                    invalid(format!("script step {}: {msg}", i + 1))
                                }
                                other => other,
                            },
                        )?);
                    }
                    DaemonKind::Scripted(steps)
                }
                other => return Err(invalid(format!("unknown daemon kind '{other}'"))),
            };
            if matches!(kind, DaemonKind::Scripted(_)) && d.script.is_empty() {
                return Err(invalid("scripted daemon needs a script"));
            }
            DaemonSpec {
                kind,
                seed: d.seed,
                fairness_bound: d.fairness_bound,
            }
        }
    };

    let mut routing_sets = Vec::new();
    for s in &raw.routing.set {
        let p = names.resolve(&s.proc)?;
        let d = names.resolve(&s.dest)?;
        let nh = names.resolve(&s.next_hop)?;
        if !topo.are_neighbors(p, nh) {
            return Err(invalid(format!(
                "routing set at {}: {} is not a neighbor",
                labels[p.index()],
                labels[nh.index()]
            )));
        }
        routing_sets.push((
            p,
            d,
            RouteEntry {
                dist_est: s.dist_est.unwrap_or(topo.dist(p, d) as u16),
                next_hop: Some(nh),
            },
        ));
    }

    let mut sends = Vec::new();
    for (i, s) in raw.workload.send.iter().enumerate() {
        let from = names.resolve(&s.from)?;
        let to = names.resolve(&s.to)?;
        let payload = s.payload.clone().unwrap_or_else(|| format!("m{i}"));
        sends.push((from, to, payload, s.available_at.unwrap_or(0)));
    }
    let generate = match raw.workload.generate.as_ref() {
        None => None,
        Some(g) => Some(GenerateSpec {
            count: g.count,
            seed: g.seed,
            every_k: g.every_k.unwrap_or(0),
            to: match &g.to {
                None => None,
                Some(r) => Some(names.resolve(r)?),
            },
        }),
    };

    let mut placements_raw = Vec::new();
    for place in &raw.corruption.place {
        placements_raw.push(resolve_placement(place, &names, protocol)?);
    }

    let delivery_budget = match &raw.budgets.delivery_budget {
        None => DeliveryBudget::Auto,
        Some(toml::Value::String(s)) if s == "auto" => DeliveryBudget::Auto,
        Some(toml::Value::String(s)) if s == "off" => DeliveryBudget::Off,
        Some(toml::Value::Integer(i)) if *i >= 0 => DeliveryBudget::Rounds(*i as u64),
        Some(v) => {
            return Err(invalid(format!(
                "delivery_budget must be \"auto\", \"off\", or rounds; got {v}"
            )))
        }
    };

    let check = CheckSpec {
        depth: raw.check.depth.unwrap_or(30),
        state_budget: raw.check.state_budget.unwrap_or(1_000_000),
        injections: match raw.check.injections.as_deref() {
            None | Some("single-slot") => CheckInjections::SingleSlot,
            Some("none") => CheckInjections::None,
            Some(other) => return Err(invalid(format!("unknown injections '{other}'"))),
        },
        payloads: raw.check.payloads.clone(),
        routing_family: match raw.check.routing_family.as_deref() {
            None | Some("next-hop") => CheckRoutingFamily::NextHopCombos,
            Some("correct") => CheckRoutingFamily::CorrectOnly,
            Some(other) => return Err(invalid(format!("unknown routing family '{other}'"))),
        },
    };

    let mut mutants = Vec::new();
    for m in &raw.mutants.rules {
        mutants.push(m.parse::<Mutant>().map_err(|e| invalid(e.to_string()))?);
    }

    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".to_string()),
        protocol,
        topo,
        labels,
        daemon,
        routing_mode,
        routing_sets,
        sends,
        generate,
        corruption_seed: raw.corruption.seed,
        routing_severity: raw.corruption.routing_severity.unwrap_or(0.0),
        inject: raw.corruption.inject.unwrap_or(0),
        inject_ranks: raw.corruption.ranks.clone(),
        scramble_queues: raw.corruption.scramble_queues.unwrap_or(false),
        placements_raw,
        max_steps: raw.budgets.max_steps.unwrap_or(1_000_000),
        stop_rounds: raw.budgets.stop_rounds.unwrap_or(0),
        delivery_budget,
        saturation_window: raw.budgets.saturation_window.unwrap_or(false),
        fairness_check: raw.budgets.fairness_check.unwrap_or(true),
        check,
        mutants,
    })
}

fn resolve_placement(
    place: &PlaceToml,
    names: &NameMap,
    protocol: Protocol,
) -> Result<(Placement, String), ScenarioError> {
    let proc = names.resolve(&place.proc)?;
    match protocol {
        Protocol::Ssmfp1 => {
            let buf = place
                .buf
                .as_deref()
                .ok_or_else(|| invalid("placement needs buf = \"R\" or \"E\""))?;
            let emission = match buf {
                "R" => false,
                "E" => true,
                other => return Err(invalid(format!("unknown buf '{other}'"))),
            };
            let dest = names.resolve(
                place
                    .dest
                    .as_ref()
                    .ok_or_else(|| invalid("placement needs dest"))?,
            )?;
            let last_hop = names.resolve(
                place
                    .last_hop
                    .as_ref()
                    .ok_or_else(|| invalid("placement needs last_hop"))?,
            )?;
            let color = place
                .color
                .ok_or_else(|| invalid("placement needs color"))?;
            Ok((
                Placement::P1 {
                    proc,
                    emission,
                    dest,
                    payload: crate::message::Payload(0),
                    last_hop,
                    color,
                },
                place.payload.clone(),
            ))
        }
        Protocol::Ssmfp2 => {
            let rank = place.rank.ok_or_else(|| invalid("placement needs rank"))?;
            let next = names.resolve(
                place
                    .next
                    .as_ref()
                    .ok_or_else(|| invalid("placement needs next"))?,
            )?;
            let last = names.resolve(
                place
                    .last
                    .as_ref()
                    .ok_or_else(|| invalid("placement needs last"))?,
            )?;
            let dest = names.resolve(
                place
                    .dest
                    .as_ref()
                    .ok_or_else(|| invalid("placement needs dest"))?,
            )?;
            let kind = match place.kind.as_deref() {
                Some("S") => AckKind::S,
                Some("A") => AckKind::A,
                Some("F") => AckKind::F,
                _ => return Err(invalid("placement needs type = \"S\"|\"A\"|\"F\"")),
            };
            Ok((
                Placement::P2 {
                    proc,
                    rank,
                    payload: crate::message::Payload(0),
                    next,
                    last,
                    dest,
                    kind,
                },
                place.payload.clone(),
            ))
        }
    }
}

/// Script step syntax: whitespace-separated actions `proc:rule`, where rule
/// is `repair`, `route@dest`, `R<k>@dest` (destination scheme), or
/// `R<k>[#rank]` (distance scheme; fixed-rank rules may omit the rank).
fn parse_script_step(
    line: &str,
    names: &NameMap,
    topo: &Topology,
    protocol: Protocol,
) -> Result<Vec<RuleInstance>, ScenarioError> {
    let mut out = Vec::new();
    for token in line.split_whitespace() {
        let (proc_s, rule_s) = token
            .split_once(':')
            .ok_or_else(|| invalid(format!("bad action '{token}', expected proc:rule")))?;
        let proc = names.lookup(proc_s)?;
        if rule_s == "repair" {
            out.push(RuleInstance {
                proc,
                rule: Rule::RoutingRepair,
            });
            continue;
        }
        if rule_s == "route" {
            out.push(RuleInstance {
                proc,
                rule: Rule::Routing,
            });
            continue;
        }
        match protocol {
            Protocol::Ssmfp1 => {
                let (r, dest_s) = rule_s
                    .split_once('@')
                    .ok_or_else(|| invalid(format!("'{token}': expected R<k>@dest")))?;
                let rule = parse_p1_rule(r)?;
                out.push(RuleInstance {
                    proc,
                    rule: Rule::P1 {
                        rule,
                        dest: names.lookup(dest_s)?,
                    },
                });
            }
            Protocol::Ssmfp2 => {
                let (r, rank) = match rule_s.split_once('#') {
                    Some((r, rank_s)) => (
                        r,
                        Some(rank_s.parse::<u8>().map_err(|_| {
                            invalid(format!("'{token}': bad rank '{rank_s}'"))
                        })?),
                    ),
                    None => (rule_s, None),
                };
                let rule = parse_p2_rule(r)?;
                let top = (topo.diameter() + 1) as u8;
                let rank = match (rank, fixed_rank(rule, top)) {
                    (Some(r), _) => r,
                    (None, Some(r)) => r,
                    (None, None) => {
                        return Err(invalid(format!("'{token}': rule needs #rank")))
                    }
                };
                if rank == 0 || rank > top {
                    return Err(invalid(format!(
                        "'{token}': rank {rank} outside 1..={top}"
                    )));
                }
                out.push(RuleInstance {
                    proc,
                    rule: Rule::P2 { rule, rank },
                });
            }
        }
    }
    Ok(out)
}

fn parse_p1_rule(s: &str) -> Result<P1Rule, ScenarioError> {
    Ok(match s {
        "R1" => P1Rule::R1,
        "R2" => P1Rule::R2,
        "R3" => P1Rule::R3,
        "R4" => P1Rule::R4,
        "R5" => P1Rule::R5,
        "R6" => P1Rule::R6,
        other => return Err(invalid(format!("unknown rule '{other}'"))),
    })
}

fn parse_p2_rule(s: &str) -> Result<P2Rule, ScenarioError> {
    let all = crate::ssmfp2::ALL_RULES;
    for (i, r) in all.iter().enumerate() {
        if s == format!("R{}", i + 1) {
            return Ok(*r);
        }
    }
    Err(invalid(format!("unknown rule '{s}'")))
}

fn fixed_rank(rule: P2Rule, top: u8) -> Option<u8> {
    match rule {
        P2Rule::R1 | P2Rule::R2 | P2Rule::R3 | P2Rule::R4 | P2Rule::R5 | P2Rule::R6 => Some(1),
        P2Rule::R12 | P2Rule::R13 | P2Rule::R14 | P2Rule::R17 | P2Rule::R18 => Some(top),
        _ => None,
    }
}

impl Scenario {
    /// Re-targets a protocol-agnostic scenario at the other scheme. Typed
    /// content (explicit placements, scripted steps) cannot be translated
    /// between buffer layouts and is rejected.
    pub fn with_protocol(mut self, protocol: Protocol) -> Result<Scenario, ScenarioError> {
        if protocol == self.protocol {
            return Ok(self);
        }
        if !self.placements_raw.is_empty() {
            return Err(invalid(
                "cannot override the protocol: the scenario places typed invalid messages",
            ));
        }
        if matches!(self.daemon.kind, DaemonKind::Scripted(_)) {
            return Err(invalid(
                "cannot override the protocol: the scenario scripts typed rules",
            ));
        }
        self.protocol = protocol;
        Ok(self)
    }

    /// Scripted runs replay pinned executions; expose the script length so
    /// callers can assert full consumption.
    pub fn script_len(&self) -> Option<usize> {
        match &self.daemon.kind {
            DaemonKind::Scripted(steps) => Some(steps.len()),
            _ => None,
        }
    }
}

/// Label map helper for rendering instances in diagnostics.
pub fn instance_label(scenario: &Scenario, inst: &RuleInstance) -> String {
    let p = scenario.label(inst.proc);
    match inst.rule {
        Rule::Routing => format!("{p}:route"),
        Rule::RoutingRepair => format!("{p}:repair"),
        Rule::P1 { rule, dest } => format!("{p}:{rule:?}@{}", scenario.label(dest)),
        Rule::P2 { rule, rank } => format!("{p}:{rule:?}#{rank}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG_TOPOLOGY: &str = r#"
protocol = "ssmfp1"
[topology]
nodes = ["a", "b", "c", "d", "e"]
edges = [["a","c"], ["b","c"], ["c","d"], ["d","e"]]
"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = Scenario::parse(FIG_TOPOLOGY, "test").unwrap();
        assert_eq!(s.topo.n(), 5);
        assert_eq!(s.topo.max_degree(), 3);
        assert_eq!(s.label(NodeId(2)), "c");
        assert_eq!(s.fairness_bound(), 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{FIG_TOPOLOGY}\n[daemon]\nkind = \"weakly-fair\"\nbogus = 1\n");
        let err = Scenario::parse(&bad, "test").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_anchors() {
        let bad = "protocol = \"ssmfp1\"\n[topology\n";
        let err = Scenario::parse(bad, "bad.scenario").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bad.scenario"), "{text}");
        assert!(text.contains("line 2"), "{text}");
    }

    #[test]
    fn script_dsl_resolves_names() {
        let text = format!(
            "{FIG_TOPOLOGY}\n[daemon]\nkind = \"scripted\"\nscript = [\"c:R1@b\", \"a:R3@b c:R1@b\", \"c:repair\"]\n[routing]\nmode = \"scripted\"\n"
        );
        let s = Scenario::parse(&text, "test").unwrap();
        let DaemonKind::Scripted(steps) = &s.daemon.kind else {
            panic!("expected script")
        };
        assert_eq!(steps.len(), 3);
        assert_eq!(steps[1].len(), 2);
        assert_eq!(steps[2][0].rule, Rule::RoutingRepair);
    }

    #[test]
    fn prepare_is_deterministic_per_seed() {
        let text = format!(
            "{FIG_TOPOLOGY}\n[workload.generate]\ncount = 3\n[corruption]\nrouting_severity = 1.0\ninject = 5\n"
        );
        let s = Scenario::parse(&text, "test").unwrap();
        let a = s.prepare(42).unwrap();
        let b = s.prepare(42).unwrap();
        let c = s.prepare(43).unwrap();
        assert_eq!(a.initial.stable_hash(), b.initial.stable_hash());
        assert_ne!(a.initial.stable_hash(), c.initial.stable_hash());
    }
}
