//! Streams one audited run to disk the way the binary does: a JSON-lines
//! trace, the per-ghost metrics CSV, and the text summary, then reads the
//! trace back to show the record layout.
//!
//!     cargo run --release --example trace_and_metrics

use std::io::BufWriter;

use snapfwd::cli::execute;
use snapfwd::trace::{write_metrics_csv, write_summary};
use snapfwd::Scenario;

fn main() {
    let path =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/sweep_fig1_p1.scenario");
    let scenario = Scenario::load(&path).expect("scenario");
    let dir = std::env::temp_dir().join("snapfwd-trace-example");
    std::fs::create_dir_all(&dir).expect("out dir");

    let trace_path = dir.join("trace.jsonl");
    let mut trace = BufWriter::new(std::fs::File::create(&trace_path).expect("trace file"));
    let art = execute(&scenario, 11, Some(&mut trace)).expect("run");
    drop(trace);

    let metrics_path = dir.join("metrics.csv");
    let mut metrics = BufWriter::new(std::fs::File::create(&metrics_path).expect("csv"));
    write_metrics_csv(&mut metrics, &art.metrics).expect("csv write");
    drop(metrics);

    println!("verdict: {:?}", art.verdict);
    let mut summary = Vec::new();
    write_summary(&mut summary, &art.metrics).unwrap();
    print!("{}", String::from_utf8_lossy(&summary));

    let text = std::fs::read_to_string(&trace_path).unwrap();
    println!("\nfirst three trace records of {}:", text.lines().count());
    for line in text.lines().take(3) {
        println!("  {line}");
    }
    println!("\nmetrics csv:");
    print!("{}", std::fs::read_to_string(&metrics_path).unwrap());
}
