//! Command implementations behind the `snapfwd` binary: run one scenario,
//! sweep it over a seed range, exhaustively check a tiny instance, or
//! re-aggregate saved metrics. Exit codes are the machine contract:
//! 0 pass, 1 violation, 2 budget exceeded, 64 usage or scenario error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::kernel::{run, Observer, RunOutcome};
use crate::scenario::{instance_label, Scenario};
use crate::trace::{write_metrics_csv, write_summary, TraceWriter};
use crate::verifier::explore::{explore, minimize_witness, ExploreOutcome};
use crate::verifier::{Audit, Metrics, Verdict};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// Flag overrides shared by the commands.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub protocol: Option<crate::config::Protocol>,
    pub max_steps: Option<u64>,
    pub max_rounds: Option<u64>,
    pub mutant: Option<crate::rules::Mutant>,
    pub out_dir: Option<PathBuf>,
}

/// Output root: `--out-dir`, else `SNAPFWD_OUT_DIR`, else `./snapfwd-out`.
pub fn out_dir(overrides: &Overrides) -> PathBuf {
    if let Some(dir) = &overrides.out_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("SNAPFWD_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("snapfwd-out")
}

fn load(path: &Path, overrides: &Overrides) -> Result<Scenario, u8> {
    let mut scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(EXIT_USAGE);
        }
    };
    if let Some(p) = overrides.protocol {
        scenario = match scenario.with_protocol(p) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return Err(EXIT_USAGE);
            }
        };
    }
    if let Some(ms) = overrides.max_steps {
        scenario.max_steps = ms;
    }
    if let Some(mr) = overrides.max_rounds {
        scenario.stop_rounds = mr;
    }
    if let Some(m) = overrides.mutant {
        scenario.mutants.push(m);
    }
    Ok(scenario)
}

/// One audited, traced run of a scenario.
pub struct RunArtifacts {
    pub verdict: Verdict,
    pub metrics: Metrics,
    pub outcome: RunOutcome,
    pub seed: u64,
}

/// Executes one seeded run, streaming the trace to `trace_out` when given.
pub fn execute(
    scenario: &Scenario,
    seed: u64,
    trace_out: Option<&mut dyn Write>,
) -> Result<RunArtifacts, String> {
    let prepared = scenario.prepare(seed).map_err(|e| e.to_string())?;
    let mut audit = Audit::new(&prepared.world, &prepared.origins, prepared.audit.clone());
    let report = match trace_out {
        Some(out) => {
            let mut tracer = TraceWriter::new(out);
            let mut fan = crate::verifier::Observers(vec![&mut audit, &mut tracer]);
            let mut daemon = prepared.daemon;
            run(
                &prepared.world,
                prepared.initial,
                &mut daemon,
                &prepared.params,
                &mut fan,
            )
        }
        None => {
            let mut daemon = prepared.daemon;
            run(
                &prepared.world,
                prepared.initial,
                &mut daemon,
                &prepared.params,
                &mut audit,
            )
        }
    }
    .map_err(|e| e.to_string())?;
    let outcome = report.outcome;
    let (verdict, metrics) = audit.finish(&report);
    Ok(RunArtifacts {
        verdict,
        metrics,
        outcome,
        seed,
    })
}

fn verdict_exit(verdict: &Verdict) -> u8 {
    match verdict {
        Verdict::Pass => EXIT_PASS,
        Verdict::Violation(_) => EXIT_VIOLATION,
        Verdict::BudgetExceeded => EXIT_BUDGET,
    }
}

fn report_verdict(scenario: &Scenario, art: &RunArtifacts) {
    match &art.verdict {
        Verdict::Pass => println!(
            "pass: {} seed {} ({} steps, {} rounds, {} deliveries)",
            scenario.name, art.seed, art.metrics.steps, art.metrics.rounds, art.metrics.deliveries
        ),
        Verdict::Violation(v) => println!(
            "violation: {} seed {} step {}: {} - {}",
            scenario.name, art.seed, v.step, v.kind, v.detail
        ),
        Verdict::BudgetExceeded => println!(
            "budget exceeded: {} seed {} after {} steps",
            scenario.name, art.seed, art.metrics.steps
        ),
    }
}

/// `snapfwd run`: one seed, trace + metrics + summary on disk.
pub fn cmd_run(path: &Path, overrides: &Overrides) -> u8 {
    let scenario = match load(path, overrides) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let seed = overrides.seed.unwrap_or(0);
    let dir = out_dir(overrides);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    let trace_path = dir.join(format!("{}-seed{}.trace.jsonl", scenario.name, seed));
    let mut trace_file = match File::create(&trace_path) {
        Ok(f) => BufWriter::new(f),
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", trace_path.display());
            return EXIT_USAGE;
        }
    };
    let art = match execute(&scenario, seed, Some(&mut trace_file)) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    drop(trace_file);
    let metrics_path = dir.join(format!("{}-seed{}.metrics.csv", scenario.name, seed));
    let summary_path = dir.join(format!("{}-seed{}.summary.txt", scenario.name, seed));
    if let Err(e) = File::create(&metrics_path)
        .and_then(|f| write_metrics_csv(&mut BufWriter::new(f), &art.metrics))
    {
        eprintln!("error: writing metrics: {e}");
        return EXIT_USAGE;
    }
    if let Err(e) = File::create(&summary_path)
        .and_then(|f| write_summary(&mut BufWriter::new(f), &art.metrics))
    {
        eprintln!("error: writing summary: {e}");
        return EXIT_USAGE;
    }
    report_verdict(&scenario, &art);
    println!("trace:   {}", trace_path.display());
    println!("metrics: {}", metrics_path.display());
    verdict_exit(&art.verdict)
}

/// Aggregated sweep outcome.
pub struct SweepOutcome {
    pub runs: usize,
    pub failures: Vec<RunArtifacts>,
    pub budget_hits: usize,
    pub max_invalid_per_dest: u32,
    pub max_rounds_to_delivery: u64,
}

/// Runs one audit per seed, concurrently; metrics land per seed.
pub fn sweep(
    scenario: &Scenario,
    seeds: impl IntoIterator<Item = u64>,
    dir: Option<&Path>,
) -> Result<SweepOutcome, String> {
    let seeds: Vec<u64> = seeds.into_iter().collect();
    let artifacts: Result<Vec<RunArtifacts>, String> = seeds
        .par_iter()
        .map(|&seed| {
            let art = execute(scenario, seed, None)?;
            if let Some(dir) = dir {
                let path = dir.join(format!("{}-seed{}.metrics.csv", scenario.name, seed));
                let file = File::create(&path).map_err(|e| e.to_string())?;
                write_metrics_csv(&mut BufWriter::new(file), &art.metrics)
                    .map_err(|e| e.to_string())?;
            }
            Ok(art)
        })
        .collect();
    let artifacts = artifacts?;
    let mut outcome = SweepOutcome {
        runs: artifacts.len(),
        failures: Vec::new(),
        budget_hits: 0,
        max_invalid_per_dest: 0,
        max_rounds_to_delivery: 0,
    };
    for art in artifacts {
        let worst_invalid = art
            .metrics
            .invalid_deliveries_per_dest
            .iter()
            .copied()
            .max()
            .unwrap_or(0);
        outcome.max_invalid_per_dest = outcome.max_invalid_per_dest.max(worst_invalid);
        let worst_rounds = art
            .metrics
            .ghosts
            .iter()
            .filter(|g| g.valid)
            .filter_map(|g| g.rounds_to_delivery)
            .max()
            .unwrap_or(0);
        outcome.max_rounds_to_delivery = outcome.max_rounds_to_delivery.max(worst_rounds);
        match art.verdict {
            Verdict::Pass => {}
            Verdict::BudgetExceeded => outcome.budget_hits += 1,
            Verdict::Violation(_) => outcome.failures.push(art),
        }
    }
    Ok(outcome)
}

fn parse_seed_range(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.parse().map_err(|_| format!("bad seed range '{s}'"))?;
        let b: u64 = b.parse().map_err(|_| format!("bad seed range '{s}'"))?;
        if b <= a {
            return Err(format!("empty seed range '{s}'"));
        }
        Ok((a..b).collect())
    } else {
        let one: u64 = s.parse().map_err(|_| format!("bad seed '{s}'"))?;
        Ok(vec![one])
    }
}

/// `snapfwd sweep`: one audit per seed in `range` (`a..b` half-open).
pub fn cmd_sweep(path: &Path, range: &str, overrides: &Overrides) -> u8 {
    let scenario = match load(path, overrides) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let seeds = match parse_seed_range(range) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let dir = out_dir(overrides);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    let outcome = match sweep(&scenario, seeds, Some(&dir)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let bound = 2 * scenario.topo.n();
    println!(
        "sweep: {} runs, {} violations, {} budget hits",
        outcome.runs,
        outcome.failures.len(),
        outcome.budget_hits
    );
    println!(
        "max invalid deliveries per destination: {} (scheme bound {})",
        outcome.max_invalid_per_dest, bound
    );
    println!(
        "max rounds to delivery: {}",
        outcome.max_rounds_to_delivery
    );
    for art in outcome.failures.iter().take(5) {
        report_verdict(&scenario, art);
    }
    if !outcome.failures.is_empty() {
        EXIT_VIOLATION
    } else if outcome.budget_hits > 0 {
        EXIT_BUDGET
    } else {
        EXIT_PASS
    }
}

/// `snapfwd check`: bounded-exhaustive verification of a tiny scenario.
pub fn cmd_check(path: &Path, overrides: &Overrides) -> u8 {
    let scenario = match load(path, overrides) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if scenario.topo.n() > 3 {
        eprintln!(
            "error: exhaustive checking requires n <= 3, scenario has n = {}",
            scenario.topo.n()
        );
        return EXIT_USAGE;
    }
    let world = scenario.world();
    let roots = match scenario.check_roots() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    println!(
        "check: {} ({} roots, depth {})",
        scenario.name,
        roots.len(),
        scenario.check.depth
    );
    match explore(&world, &roots, &scenario.explore_params()) {
        Ok(ExploreOutcome::Pass { states }) => {
            println!("pass: {states} states, no violation");
            EXIT_PASS
        }
        Ok(ExploreOutcome::Violation(witness)) => {
            let (root, origins) = &roots[witness.root];
            let script = minimize_witness(&world, root, origins, &witness.script);
            println!(
                "violation: root {} step {}: {} - {}",
                witness.root, witness.violation.step, witness.violation.kind,
                witness.violation.detail
            );
            println!("witness ({} steps after minimization):", script.len());
            for (i, sel) in script.iter().enumerate() {
                let labels: Vec<String> =
                    sel.iter().map(|inst| instance_label(&scenario, inst)).collect();
                println!("  step {}: {}", i + 1, labels.join(" "));
            }
            EXIT_VIOLATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_BUDGET
        }
    }
}

/// `snapfwd report`: aggregate previously written per-seed metrics.
pub fn cmd_report(dir: &Path) -> u8 {
    let mut total_ghosts = 0usize;
    let mut delivered = 0usize;
    let mut valid = 0usize;
    let mut files = 0usize;
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", dir.display());
            return EXIT_USAGE;
        }
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        files += 1;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                continue;
            }
            total_ghosts += 1;
            if cols[1] == "true" {
                valid += 1;
            }
            if !cols[3].is_empty() {
                delivered += 1;
            }
        }
    }
    println!("report over {files} metric files:");
    println!("  ghosts:    {total_ghosts} ({valid} valid)");
    println!("  delivered: {delivered}");
    EXIT_PASS
}

/// Test-support hook: run a scenario with an extra observer attached.
pub fn execute_with_observer(
    scenario: &Scenario,
    seed: u64,
    extra: &mut dyn Observer,
) -> Result<(RunArtifacts, RunOutcome), String> {
    let prepared = scenario.prepare(seed).map_err(|e| e.to_string())?;
    let mut audit = Audit::new(&prepared.world, &prepared.origins, prepared.audit.clone());
    let mut daemon = prepared.daemon;
    let report = {
        let mut fan = crate::verifier::Observers(vec![&mut audit, extra]);
        run(
            &prepared.world,
            prepared.initial,
            &mut daemon,
            &prepared.params,
            &mut fan,
        )
        .map_err(|e| e.to_string())?
    };
    let outcome = report.outcome;
    let (verdict, metrics) = audit.finish(&report);
    Ok((
        RunArtifacts {
            verdict,
            metrics,
            outcome,
            seed,
        },
        outcome,
    ))
}
