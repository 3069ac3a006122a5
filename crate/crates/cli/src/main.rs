//! Command-line front end: execute runs, validate logs against the
//! trace-level recomputation, and summarize results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use nestsim_cli::oracle::OracleConfig;
use nestsim_cli::runner::{self, RunDirectory};
use nestsim_cli::summary;

#[derive(Parser)]
#[command(
    name = "nestsim",
    version,
    about = "Deterministic VR-streaming simulator: run manifests, validate logs, summarize results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run manifest and write all artifacts to a result directory.
    Run {
        /// Path to the manifest (JSON).
        manifest: PathBuf,
        /// Output root; defaults to $NESTSIM_OUT, then ./results.
        /// Artifacts land in <root>/<manifest stem>/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute every manifest matching a pattern (`*` allowed in the file
    /// name component).
    Sweep {
        /// Pattern such as runs/sweep_*.json.
        pattern: String,
        /// Output root; defaults to $NESTSIM_OUT, then ./results.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute every metric from a packet trace and compare against a
    /// metrics log. Exits nonzero if any value, presence or absence
    /// disagrees.
    Validate {
        /// Packet trace CSV.
        trace: PathBuf,
        /// Metrics log (JSON lines).
        metrics: PathBuf,
        /// Feedback CSV; defaults to the trace path with "trace" replaced
        /// by "feedback" in the file name.
        #[arg(long)]
        feedback: Option<PathBuf>,
        /// Sender-side frame ledger CSV; when given, frame accounting is
        /// cross-checked too.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// run.json carrying the receiver configuration; defaults to the
        /// one next to the trace if present, else built-in defaults.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Print per-interval aggregates for every session of a result
    /// directory.
    Summarize {
        /// Result directory (must contain run.json).
        results: PathBuf,
        /// Comma-separated half-open intervals in seconds, e.g.
        /// "0-20,20-40"; defaults to the whole run.
        #[arg(long)]
        intervals: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { manifest, out } => {
            let root = runner::output_root(out.as_deref());
            let dir = runner::execute_run(&manifest, &root)?;
            report_run(&dir);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { pattern, out } => {
            let root = runner::output_root(out.as_deref());
            let manifests = runner::expand_pattern(&pattern)?;
            println!("sweep: {} manifest(s)", manifests.len());
            for manifest in manifests {
                let dir = runner::execute_run(&manifest, &root)
                    .with_context(|| format!("executing {}", manifest.display()))?;
                report_run(&dir);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            trace,
            metrics,
            feedback,
            frames,
            run,
        } => {
            let feedback = match feedback {
                Some(p) => p,
                None => default_feedback_path(&trace)?,
            };
            let cfg = oracle_config(run.as_deref(), &trace)?;
            let outcome =
                runner::validate_artifacts(&trace, &metrics, &feedback, frames.as_deref(), &cfg)?;
            print_validation(&outcome);
            if outcome.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Summarize { results, intervals } => {
            summarize(&results, intervals.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report_run(dir: &RunDirectory) {
    println!(
        "run {} -> {} ({} session(s))",
        dir.info.run,
        dir.path.display(),
        dir.info.sessions.len()
    );
}

/// trace_s0.csv -> feedback_s0.csv, in the same directory.
fn default_feedback_path(trace: &Path) -> Result<PathBuf> {
    let name = trace
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("trace path {} has no file name", trace.display()))?;
    if !name.contains("trace") {
        bail!(
            "cannot derive a feedback path from {}: file name does not contain \"trace\"; pass --feedback",
            trace.display()
        );
    }
    Ok(trace.with_file_name(name.replacen("trace", "feedback", 1)))
}

/// Receiver configuration for the recomputation: --run wins, else a
/// run.json sitting next to the trace, else built-in defaults.
fn oracle_config(run_flag: Option<&Path>, trace: &Path) -> Result<OracleConfig> {
    let run_path = match run_flag {
        Some(p) => Some(p.to_path_buf()),
        None => {
            let sibling = trace
                .parent()
                .unwrap_or(Path::new("."))
                .join("run.json");
            sibling.is_file().then_some(sibling)
        }
    };
    match run_path {
        None => Ok(OracleConfig::default()),
        Some(p) => {
            let info = runner::RunInfo::load(&p)?;
            Ok(runner::oracle_config_from(&info.metrics))
        }
    }
}

fn print_validation(outcome: &runner::ValidateOutcome) {
    let report = &outcome.report;
    println!(
        "compared {} samples (tolerance {:.1e})",
        report.compared, report.tolerance
    );
    println!("worst relative deviation per metric:");
    if report.per_metric_max_dev.is_empty() {
        println!("  (no samples)");
    }
    for (name, dev) in &report.per_metric_max_dev {
        println!("  {name:<22} {dev:.3e}");
    }
    if report.passed() && outcome.accounting.is_empty() {
        println!("validation: PASS");
        return;
    }
    let affected = report.affected_metrics();
    if !affected.is_empty() {
        let list: Vec<&str> = affected.iter().map(|s| s.as_str()).collect();
        println!("affected metrics: {}", list.join(", "));
    }
    for m in report.mismatches.iter().take(10) {
        println!(
            "  frame {} {}: logged {} vs recomputed {} (rel dev {:.3e})",
            m.frame_index, m.name, m.logged, m.recomputed, m.rel_dev
        );
    }
    if report.mismatches.len() > 10 {
        println!("  ... {} further mismatches", report.mismatches.len() - 10);
    }
    for (frame, name) in report.missing_from_log.iter().take(10) {
        println!("  frame {frame} {name}: recomputed but missing from the log");
    }
    for (frame, name) in report.unexpected_in_log.iter().take(10) {
        println!("  frame {frame} {name}: logged but not recomputed");
    }
    for problem in outcome.accounting.iter().take(10) {
        println!("  accounting: {problem}");
    }
    println!("validation: FAIL");
}

fn summarize(results: &Path, intervals: Option<&str>) -> Result<()> {
    let (info, sessions) = runner::load_sessions(results)?;
    let spans = match intervals {
        Some(text) => summary::parse_intervals(text)?,
        None => vec![(0.0, info.duration_s)],
    };
    println!("run {} ({} session(s))", info.run, sessions.len());
    for s in &sessions {
        let offset = nestsim_core::TimeDelta::from_secs_f64(s.client_offset_s);
        let rows: Vec<nestsim_core::IntervalSummary> = spans
            .iter()
            .map(|&(start, end)| {
                nestsim_core::summarize_interval(
                    &s.metrics,
                    &s.decisions,
                    &s.feedback,
                    offset,
                    start,
                    end,
                )
            })
            .collect();
        println!();
        println!("session {}", s.session);
        print!("{}", summary::render_table(&rows));
    }
    Ok(())
}
