//! Interval parsing and table rendering for `nestsim summarize`.
//!
//! Summaries themselves are recomputed from the raw logs by the core
//! library's windowing function, so a summary table printed here is always
//! reproducible by any holder of the log files.

use anyhow::{bail, Context, Result};
use nestsim_core::IntervalSummary;

/// Parses `"20-40,60-80,100-120"` into `[(20,40), (60,80), (100,120)]`
/// second windows, each half-open `[start, end)`.
pub fn parse_intervals(spec: &str) -> Result<Vec<(f64, f64)>> {
    let mut intervals = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (a, b) = part
            .split_once('-')
            .with_context(|| format!("interval {part:?} is not of the form start-end"))?;
        let start: f64 = a
            .trim()
            .parse()
            .with_context(|| format!("interval {part:?}: bad start"))?;
        let end: f64 = b
            .trim()
            .parse()
            .with_context(|| format!("interval {part:?}: bad end"))?;
        if !(end > start) {
            bail!("interval {part:?}: end must be greater than start");
        }
        intervals.push((start, end));
    }
    if intervals.is_empty() {
        bail!("no intervals given");
    }
    Ok(intervals)
}

/// Renders per-interval aggregates as a fixed-width table: round-trip and
/// bitrate as mean ± spread, delivered frame rate as mean ± per-second
/// spread, packet loss as a total.
pub fn render_table(summaries: &[IntervalSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>13}  {:>22}  {:>18}  {:>8}  {:>22}\n",
        "interval_s", "vf_rtt_ms (mean±std)", "fdr_fps (mean±std)", "pl_pkts", "bitrate_mbps (mean±std)"
    ));
    for s in summaries {
        out.push_str(&format!(
            "{:>13}  {:>22}  {:>18}  {:>8}  {:>22}\n",
            format!("{:.1}-{:.1}", s.start_s, s.end_s),
            format!("{:.3} ± {:.3}", s.vf_rtt_mean_ms, s.vf_rtt_std_ms),
            format!("{:.2} ± {:.2}", s.fdr_fps, s.fdr_std_fps),
            s.packets_lost,
            format!("{:.2} ± {:.2}", s.bitrate_mean_mbps, s.bitrate_std_mbps),
        ));
    }
    out
}
