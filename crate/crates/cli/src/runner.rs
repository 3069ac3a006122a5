//! Manifest execution, result-directory layout, artifact loading and
//! file-level validation.
//!
//! A run directory contains:
//!
//! ```text
//! <out>/<manifest-stem>/
//!   config.json        resolved run configuration (scenario inlined)
//!   run.json           run identity and the per-session file map
//!   trace_s<N>.csv     packet trace of session N
//!   feedback_s<N>.csv  feedback packets of session N
//!   metrics_s<N>.jsonl emitted metric samples
//!   decisions_s<N>.jsonl controller decisions
//!   frames_s<N>.csv    sender-side frame ledger with final statuses
//!   summary_s<N>.json  whole-run aggregate of session N
//! ```
//!
//! The output root is chosen by `--out`, else the `NESTSIM_OUT` environment
//! variable, else `./results`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nestsim_core::{
    DecisionRecord, FrameStatus, IntervalSummary, MetricSample, MetricsConfig, RunConfig,
    SessionResult, StatsFeedback, ClientTime, ServerTime,
};
use serde::{Deserialize, Serialize};

use crate::logs;
use crate::manifest::{run_id, RunManifest};
use crate::oracle::{self, LoggedSample, OracleConfig, ValidationReport};
use crate::trace::{self, FileMeta, FrameRow, FrameState};

/// Environment variable naming the default output root.
pub const OUT_ENV_VAR: &str = "NESTSIM_OUT";

/// Per-session file map inside `run.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session: u32,
    pub client_offset_s: f64,
    pub fps: f64,
    pub trace: String,
    pub feedback: String,
    pub metrics_log: String,
    pub decisions_log: String,
    pub frames: String,
    pub summary: String,
}

/// Root metadata of a result directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunInfo {
    pub format: String,
    pub version: u32,
    /// 16 hex digits.
    pub run: String,
    pub duration_s: f64,
    pub metrics: MetricsConfig,
    pub sessions: Vec<SessionEntry>,
}

impl RunInfo {
    pub fn run_id(&self) -> Result<u64> {
        u64::from_str_radix(&self.run, 16)
            .map_err(|_| anyhow!("run id {:?} is not 16 hex digits", self.run))
    }

    pub fn load(path: &Path) -> Result<RunInfo> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading run metadata {}", path.display()))?;
        let info: RunInfo = serde_json::from_str(&text)
            .with_context(|| format!("run metadata {} does not match the schema", path.display()))?;
        if info.format != "nestsim-run" {
            bail!(
                "{} is not a run metadata file (format {:?})",
                path.display(),
                info.format
            );
        }
        Ok(info)
    }
}

/// Resolves the output root: explicit flag, then environment, then
/// `./results`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env_root) = std::env::var(OUT_ENV_VAR) {
        if !env_root.is_empty() {
            return PathBuf::from(env_root);
        }
    }
    PathBuf::from("results")
}

/// Maps the receiver-side metric settings onto the oracle's own knobs.
pub fn oracle_config_from(m: &MetricsConfig) -> OracleConfig {
    OracleConfig {
        stale_deadline_ns: m.stale_deadline.as_nanos(),
        frame_jitter_window: m.frame_jitter_window,
        state_noise_var: m.kalman.state_noise_var,
        meas_var_smoothing: m.kalman.meas_var_smoothing,
        meas_var_floor: m.kalman.meas_var_floor,
        init_estimate: m.kalman.init_estimate,
        init_error_var: m.kalman.init_error_var,
        init_meas_var: m.kalman.init_meas_var,
    }
}

/// The exported frame-ledger form of one session's frame records.
pub fn frame_rows_from(result: &SessionResult) -> Vec<FrameRow> {
    result
        .frames
        .iter()
        .map(|f| FrameRow {
            frame_index: f.frame_index,
            departure_server_time_ns: f.departure.as_nanos(),
            target_bitrate_bps: f.target_bitrate_bps,
            payload_bits: f.payload_bits,
            n_packets: f.n_packets,
            status: f.status.map(|s| match s {
                FrameStatus::InProgress => FrameState::InProgress,
                FrameStatus::Complete => FrameState::Complete,
                FrameStatus::Abandoned => FrameState::Abandoned,
            }),
            completion_client_time_ns: f.completion.map(|c| c.as_nanos()),
        })
        .collect()
}

/// A run directory as written by [`execute_run`].
#[derive(Clone, Debug)]
pub struct RunDirectory {
    pub path: PathBuf,
    pub info: RunInfo,
}

/// Loads, resolves and executes a manifest, then writes all artifacts under
/// `<out_root>/<manifest-stem>/`.
pub fn execute_run(manifest_path: &Path, out_root: &Path) -> Result<RunDirectory> {
    let manifest = RunManifest::load(manifest_path)?;
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let config = manifest.resolve(base_dir)?;
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("manifest path {} has no file stem", manifest_path.display()))?;
    let dir = out_root.join(stem);
    execute_config(&config, &dir)
}

/// Executes an already-resolved configuration into `dir`.
pub fn execute_config(config: &RunConfig, dir: &Path) -> Result<RunDirectory> {
    let id = run_id(config);
    let results = nestsim_core::run(config).map_err(|e| anyhow!("simulation failed: {e}"))?;

    fs::create_dir_all(dir)
        .with_context(|| format!("creating result directory {}", dir.display()))?;

    write_json(dir, "config.json", config)?;

    let mut entries = Vec::new();
    for result in &results {
        let n = result.session;
        let meta = FileMeta {
            run_id: id,
            session: n,
        };
        let entry = SessionEntry {
            session: n,
            client_offset_s: result.client_offset_s,
            fps: result.fps,
            trace: format!("trace_s{n}.csv"),
            feedback: format!("feedback_s{n}.csv"),
            metrics_log: format!("metrics_s{n}.jsonl"),
            decisions_log: format!("decisions_s{n}.jsonl"),
            frames: format!("frames_s{n}.csv"),
            summary: format!("summary_s{n}.json"),
        };
        trace::write_trace(&dir.join(&entry.trace), meta, &result.packets)?;
        trace::write_feedback(&dir.join(&entry.feedback), meta, &result.feedback)?;
        trace::write_frame_rows(&dir.join(&entry.frames), meta, &frame_rows_from(result))?;
        logs::write_metrics(&dir.join(&entry.metrics_log), meta, &result.metrics)?;
        logs::write_decisions(&dir.join(&entry.decisions_log), meta, &result.decisions)?;
        let whole_run: Vec<IntervalSummary> =
            vec![result.interval_summary(0.0, result.duration_s)];
        write_json(dir, &entry.summary, &whole_run)?;
        entries.push(entry);
    }

    let info = RunInfo {
        format: "nestsim-run".to_string(),
        version: 1,
        run: format!("{id:016x}"),
        duration_s: config.duration_s,
        metrics: config.metrics,
        sessions: entries,
    };
    write_json(dir, "run.json", &info)?;

    Ok(RunDirectory {
        path: dir.to_path_buf(),
        info,
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {name}"))?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Expands a sweep pattern. `*` in the final path component matches any run
/// of characters; directories in the prefix are taken literally. A pattern
/// with no `*` names a single manifest.
pub fn expand_pattern(pattern: &str) -> Result<Vec<PathBuf>> {
    let path = Path::new(pattern);
    let file_pattern = path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("pattern {pattern:?} has no file component"))?;
    if let Some(parent) = path.parent() {
        if parent.to_string_lossy().contains('*') {
            bail!("pattern {pattern:?}: `*` is only supported in the final path component");
        }
    }
    if !file_pattern.contains('*') {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut matches = Vec::new();
    let listing =
        fs::read_dir(&dir).with_context(|| format!("listing {} for {pattern:?}", dir.display()))?;
    for item in listing {
        let item = item.with_context(|| format!("listing {}", dir.display()))?;
        let name = item.file_name();
        let Some(name) = name.to_str() else { continue };
        if star_match(file_pattern, name) && item.path().is_file() {
            matches.push(item.path());
        }
    }
    matches.sort();
    if matches.is_empty() {
        bail!("pattern {pattern:?} matched no files");
    }
    Ok(matches)
}

/// Glob-style `*` matching (any run of characters, including empty); all
/// other characters are literal. Greedy with backtracking.
fn star_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

/// Result of validating one session's artifacts.
#[derive(Debug)]
pub struct ValidateOutcome {
    pub report: ValidationReport,
    /// Frame-ledger disagreements (only when a frame ledger was provided).
    pub accounting: Vec<String>,
}

impl ValidateOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed() && self.accounting.is_empty()
    }
}

/// Validates a metrics log against the independent recomputation from the
/// trace. Refuses to compare artifacts whose run identifiers or session
/// numbers disagree.
pub fn validate_artifacts(
    trace_path: &Path,
    metrics_path: &Path,
    feedback_path: &Path,
    frames_path: Option<&Path>,
    cfg: &OracleConfig,
) -> Result<ValidateOutcome> {
    let (trace_meta, rows) = trace::read_trace(trace_path)?;
    let (metrics_meta, samples) = logs::read_metrics(metrics_path)?;
    let (feedback_meta, feedback) = trace::read_feedback(feedback_path)?;

    let check_meta = |what: &str, meta: FileMeta| -> Result<()> {
        if meta != trace_meta {
            bail!(
                "run identifiers disagree: trace {} is run={:016x} session={}, {what} is run={:016x} session={} — refusing to compare artifacts from different runs",
                trace_path.display(),
                trace_meta.run_id,
                trace_meta.session,
                meta.run_id,
                meta.session,
            );
        }
        Ok(())
    };
    check_meta("metrics log", metrics_meta)?;
    check_meta("feedback file", feedback_meta)?;

    let recomputed = oracle::recompute(&rows, &feedback, cfg);
    let logged: Vec<LoggedSample> = samples
        .iter()
        .map(|s| LoggedSample {
            frame_index: s.frame_index,
            name: s.name.as_str().to_string(),
            value: s.value,
        })
        .collect();
    let report = oracle::compare(&recomputed, &logged, oracle::DEFAULT_REL_TOL);

    let accounting = match frames_path {
        None => Vec::new(),
        Some(p) => {
            let (frames_meta, frames) = trace::read_frames(p)?;
            check_meta("frame ledger", frames_meta)?;
            oracle::compare_accounting(&recomputed, &frames)
        }
    };

    Ok(ValidateOutcome { report, accounting })
}

/// One session's logs loaded back from a run directory.
pub struct LoadedSession {
    pub session: u32,
    pub client_offset_s: f64,
    pub metrics: Vec<MetricSample>,
    pub decisions: Vec<DecisionRecord>,
    pub feedback: Vec<StatsFeedback>,
}

/// Loads every session's logs from a result directory, checking that all
/// artifacts carry the directory's run identity.
pub fn load_sessions(results_dir: &Path) -> Result<(RunInfo, Vec<LoadedSession>)> {
    let info = RunInfo::load(&results_dir.join("run.json"))?;
    let expect = info.run_id()?;
    let mut sessions = Vec::new();
    for entry in &info.sessions {
        let expect_meta = FileMeta {
            run_id: expect,
            session: entry.session,
        };
        let (m_meta, metrics) = logs::read_metrics(&results_dir.join(&entry.metrics_log))?;
        let (d_meta, decisions) = logs::read_decisions(&results_dir.join(&entry.decisions_log))?;
        let (f_meta, feedback_rows) = trace::read_feedback(&results_dir.join(&entry.feedback))?;
        for (what, meta) in [
            ("metrics log", m_meta),
            ("decisions log", d_meta),
            ("feedback file", f_meta),
        ] {
            if meta != expect_meta {
                bail!(
                    "{what} of session {} carries run={:016x} session={}, expected run={:016x} session={}",
                    entry.session,
                    meta.run_id,
                    meta.session,
                    expect,
                    entry.session,
                );
            }
        }
        let feedback = feedback_rows
            .iter()
            .map(|r| StatsFeedback {
                frame_index: r.frame_index,
                sent_client_time: ClientTime::from_nanos(r.sent_client_time_ns),
                arrival_server_time: ServerTime::from_nanos(r.arrival_server_time_ns),
                size_bits: r.size_bits,
            })
            .collect();
        sessions.push(LoadedSession {
            session: entry.session,
            client_offset_s: entry.client_offset_s,
            metrics,
            decisions,
            feedback,
        });
    }
    Ok((info, sessions))
}
