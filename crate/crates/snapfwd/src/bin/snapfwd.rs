//! Thin command-line front end over the library: parse flags, delegate to
//! `snapfwd::cli`, exit with the documented code.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use snapfwd::cli::{self, Overrides};

#[derive(Parser)]
#[command(name = "snapfwd", version, about = "Simulate and verify snap-stabilizing message forwarding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Scenario file to execute.
    #[arg(long)]
    scenario: PathBuf,
    /// Run seed (defaults to 0; explicit scenario seeds win).
    #[arg(long)]
    seed: Option<u64>,
    /// Must match the scenario's protocol; buffer layouts differ.
    #[arg(long = "protocol-override")]
    protocol_override: Option<String>,
    /// Step budget override.
    #[arg(long = "max-steps")]
    max_steps: Option<u64>,
    /// Stop cleanly after this many rounds.
    #[arg(long = "max-rounds")]
    max_rounds: Option<u64>,
    /// Output root; SNAPFWD_OUT_DIR is the default.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Enable a rule mutant, e.g. ssmfp1.R4:forall-r.
    #[arg(long)]
    mutant: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one seeded run; writes trace, metrics, and summary.
    Run {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Audit one run per seed in a half-open range like 0..1000.
    Sweep {
        #[command(flatten)]
        flags: CommonFlags,
        #[arg(long)]
        seeds: String,
    },
    /// Bounded-exhaustive daemon enumeration (n <= 3 scenarios only).
    Check {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Aggregate per-seed metrics CSV files from an output directory.
    Report {
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
}

fn overrides(flags: &CommonFlags) -> Result<Overrides, String> {
    let protocol = match flags.protocol_override.as_deref() {
        None => None,
        Some("ssmfp1") => Some(snapfwd::Protocol::Ssmfp1),
        Some("ssmfp2") => Some(snapfwd::Protocol::Ssmfp2),
        Some(other) => return Err(format!("unknown protocol '{other}'")),
    };
    let mutant = match &flags.mutant {
        None => None,
        Some(s) => Some(s.parse().map_err(|e| format!("{e}"))?),
    };
    Ok(Overrides {
        seed: flags.seed,
        protocol,
        max_steps: flags.max_steps,
        max_rounds: flags.max_rounds,
        mutant,
        out_dir: flags.out_dir.clone(),
    })
}

fn main() -> ExitCode {
    // Die quietly when the consumer of a piped trace closes early.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(cli::EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let code = match cli.command {
        Command::Run { flags } => match overrides(&flags) {
            Ok(o) => cli::cmd_run(&flags.scenario, &o),
            Err(e) => {
                eprintln!("error: {e}");
                cli::EXIT_USAGE
            }
        },
        Command::Sweep { flags, seeds } => match overrides(&flags) {
            Ok(o) => cli::cmd_sweep(&flags.scenario, &seeds, &o),
            Err(e) => {
                eprintln!("error: {e}");
                cli::EXIT_USAGE
            }
        },
        Command::Check { flags } => match overrides(&flags) {
            Ok(o) => cli::cmd_check(&flags.scenario, &o),
            Err(e) => {
                eprintln!("error: {e}");
                cli::EXIT_USAGE
            }
        },
        Command::Report { out_dir } => {
            let o = Overrides {
                out_dir,
                ..Default::default()
            };
            cli::cmd_report(&cli::out_dir(&o))
        }
    };
    ExitCode::from(code)
}
