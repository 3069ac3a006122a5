//! Independent single-pass recomputation of every metric from raw trace
//! rows, used to validate emitted metric logs.
//!
//! This module deliberately shares no code with the simulator's metrics
//! engine: it works on plain trace records, carries its own assembly,
//! jitter, windowing and filter state, and is written directly against the
//! metric definitions. Agreement between the two implementations is the
//! validation result, so keep it that way — fixes to one side must be
//! re-derived, not copied.
//!
//! Processing order is the receiver's: rows sorted by arrival time, then
//! sequence number, originals before their duplicates. A frame completes
//! when its last missing packet arrives; a frame is abandoned once a
//! higher-indexed frame completes first or when a packet arrives while the
//! frame has been assembling longer than the stale deadline. Samples are
//! produced only for frames whose feedback report exists (feedback still in
//! flight at the end of a run never emitted anything), but running state —
//! previous completed frame, jitter trackers, gradient filter — advances at
//! every completion regardless.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::trace::{FeedbackRow, FrameRow, FrameState, TraceRow};

/// Relative tolerance for value agreement; the simulation is timing-exact,
/// so only floating-point evaluation-order noise is forgiven.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Knobs that shape the metric definitions themselves. Must equal the
/// settings the run was produced with, or the comparison is meaningless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// A frame still assembling this long (strictly) after its first packet
    /// arrival is abandoned at the next packet event.
    pub stale_deadline_ns: i64,
    /// Number of recent frame inter-arrival gaps in the frame-jitter spread.
    pub frame_jitter_window: usize,
    /// Delay-gradient filter: process noise variance per step, s².
    pub state_noise_var: f64,
    /// Weight of the newest squared innovation in the measurement-noise
    /// moving average.
    pub meas_var_smoothing: f64,
    /// Lower bound of the adapted measurement-noise variance, s².
    pub meas_var_floor: f64,
    pub init_estimate: f64,
    pub init_error_var: f64,
    pub init_meas_var: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            stale_deadline_ns: 50_000_000,
            frame_jitter_window: 16,
            state_noise_var: 1e-7,
            meas_var_smoothing: 0.05,
            meas_var_floor: 1e-9,
            init_estimate: 0.0,
            init_error_var: 0.1,
            init_meas_var: 1e-3,
        }
    }
}

/// One recomputed value, named with the stable log identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSample {
    pub frame_index: u64,
    pub name: &'static str,
    pub value: f64,
}

/// Everything the recomputation derives from a trace.
#[derive(Clone, Debug, Default)]
pub struct OracleOutput {
    pub samples: Vec<OracleSample>,
    pub completed: BTreeSet<u64>,
    pub abandoned: BTreeSet<u64>,
    /// Frames with at least one received packet, still incomplete at the end
    /// of the trace.
    pub in_progress: BTreeSet<u64>,
    /// Feedback rows for frames the trace never completes — artifact
    /// corruption, reported as a refusal by validation.
    pub dangling_feedback: Vec<u64>,
}

fn ns_to_s(ns: i64) -> f64 {
    ns as f64 / 1e9
}

/// Frame being assembled from received packets.
struct Building {
    need: u32,
    got: u32,
    first_arrival_ns: i64,
    /// Departure of packet 1 of the frame (all metrics reference the first
    /// packet's departure).
    first_departure_ns: Option<i64>,
    wire_bits: u64,
}

/// Snapshot of the last completed frame, for difference metrics.
struct Previous {
    completion_ns: i64,
    first_departure_ns: i64,
    highest_seq: u64,
}

/// Recomputes all metrics of one session from its trace and feedback rows.
pub fn recompute(
    rows: &[TraceRow],
    feedback: &[FeedbackRow],
    cfg: &OracleConfig,
) -> OracleOutput {
    let mut delivered: Vec<&TraceRow> = rows
        .iter()
        .filter(|r| r.arrival_client_time_ns.is_some())
        .collect();
    delivered.sort_by_key(|r| {
        (
            r.arrival_client_time_ns.unwrap(),
            r.seq,
            r.duplicate_flag,
        )
    });

    let feedback_by_frame: BTreeMap<u64, &FeedbackRow> =
        feedback.iter().map(|f| (f.frame_index, f)).collect();

    let mut out = OracleOutput::default();

    let mut building: BTreeMap<u64, Building> = BTreeMap::new();
    let mut resolved: BTreeMap<u64, bool> = BTreeMap::new(); // frame -> completed?
    let mut seen_seqs: BTreeSet<u64> = BTreeSet::new();
    let mut highest_seq: u64 = 0;
    let mut interval_packets: u64 = 0;
    let mut interval_bits: u64 = 0;
    let mut prev: Option<Previous> = None;

    // Transit-spread tracker over the raw arrival process.
    let mut jitter_s: f64 = 0.0;
    let mut last_transit: Option<(i64, i64)> = None; // (arrival, departure)

    // Sliding window of frame inter-arrival gaps.
    let mut gap_window: VecDeque<f64> = VecDeque::new();

    // Scalar random-walk filter over the raw delay gradient.
    let mut filt_estimate = cfg.init_estimate;
    let mut filt_error_var = cfg.init_error_var;
    let mut filt_meas_var = cfg.init_meas_var;

    for row in delivered {
        let arrival_ns = row.arrival_client_time_ns.unwrap();

        // Frames that outlived the stale deadline die before this packet is
        // considered — including, possibly, this packet's own frame.
        let stale: Vec<u64> = building
            .iter()
            .filter(|(_, b)| arrival_ns - b.first_arrival_ns > cfg.stale_deadline_ns)
            .map(|(&f, _)| f)
            .collect();
        for f in stale {
            building.remove(&f);
            resolved.insert(f, false);
        }

        // Arrival-process spread, duplicates included.
        if let Some((last_arr, last_dep)) = last_transit {
            let d = ns_to_s(arrival_ns - last_arr) - ns_to_s(row.departure_server_time_ns - last_dep);
            jitter_s += (d.abs() - jitter_s) / 16.0;
        }
        last_transit = Some((arrival_ns, row.departure_server_time_ns));

        if !seen_seqs.insert(row.seq) {
            continue; // duplicate: not part of the deduplicated stream
        }
        if row.seq > highest_seq {
            highest_seq = row.seq;
        }
        interval_packets += 1;
        interval_bits += row.total_bits;

        if resolved.contains_key(&row.frame_index) {
            continue; // straggler for an already-resolved frame
        }

        let b = building.entry(row.frame_index).or_insert(Building {
            need: row.n_packets_in_frame,
            got: 0,
            first_arrival_ns: arrival_ns,
            first_departure_ns: None,
            wire_bits: 0,
        });
        b.got += 1;
        if arrival_ns < b.first_arrival_ns {
            b.first_arrival_ns = arrival_ns;
        }
        if row.index_in_frame == 1 {
            b.first_departure_ns = Some(row.departure_server_time_ns);
        }
        b.wire_bits += row.total_bits;
        if b.got < b.need {
            continue;
        }

        // ---- frame completed at this arrival ----
        let done = building.remove(&row.frame_index).expect("present");
        resolved.insert(row.frame_index, true);
        let overtaken: Vec<u64> = building
            .range(..row.frame_index)
            .map(|(&f, _)| f)
            .collect();
        for f in overtaken {
            building.remove(&f);
            resolved.insert(f, false);
        }

        let completion_ns = arrival_ns;
        let span_ns = completion_ns - done.first_arrival_ns;
        let first_departure_ns = done
            .first_departure_ns
            .expect("complete frame received its first packet");

        let mut frozen: Vec<(&'static str, f64)> = Vec::new();
        frozen.push(("frame_span_s", ns_to_s(span_ns)));

        if let Some(p) = &prev {
            let gap_ns = completion_ns - p.completion_ns;
            let gap_s = ns_to_s(gap_ns);
            frozen.push(("frame_interarrival_s", gap_s));

            let expected = highest_seq - p.highest_seq;
            let lost = if interval_packets > expected {
                0
            } else {
                expected - interval_packets
            };
            frozen.push(("packet_loss_count", lost as f64));
            frozen.push((
                "packet_loss_ratio",
                if expected == 0 {
                    0.0
                } else {
                    lost as f64 / expected as f64
                },
            ));

            if gap_ns > 0 {
                frozen.push(("throughput_bps", interval_bits as f64 / gap_s));
            }

            if gap_window.len() == cfg.frame_jitter_window {
                gap_window.pop_front();
            }
            gap_window.push_back(gap_s);
            if gap_window.len() >= 2 {
                let n = gap_window.len();
                let mean = gap_window.iter().sum::<f64>() / n as f64;
                let var = gap_window
                    .iter()
                    .map(|x| (x - mean) * (x - mean))
                    .sum::<f64>()
                    / (n - 1) as f64;
                frozen.push(("frame_jitter_s", var.sqrt()));
            }

            frozen.push(("packet_jitter_s", jitter_s));

            let owd_s = gap_s - ns_to_s(first_departure_ns - p.first_departure_ns);
            frozen.push(("owd_gradient_s", owd_s));

            let innovation = owd_s - filt_estimate;
            let adapted = cfg.meas_var_smoothing * innovation * innovation
                + (1.0 - cfg.meas_var_smoothing) * filt_meas_var;
            filt_meas_var = if adapted > cfg.meas_var_floor {
                adapted
            } else {
                cfg.meas_var_floor
            };
            let prior_var = filt_error_var + cfg.state_noise_var;
            let gain = prior_var / (prior_var + filt_meas_var);
            filt_estimate += gain * innovation;
            filt_error_var = (1.0 - gain) * prior_var;
            frozen.push(("fowd_s", filt_estimate));
        }

        if span_ns > 0 {
            frozen.push(("peak_throughput_bps", done.wire_bits as f64 / ns_to_s(span_ns)));
        }

        interval_packets = 0;
        interval_bits = 0;
        prev = Some(Previous {
            completion_ns,
            first_departure_ns,
            highest_seq,
        });

        if let Some(fb) = feedback_by_frame.get(&row.frame_index) {
            let vf_rtt_s = ns_to_s(fb.arrival_server_time_ns - first_departure_ns);
            for (name, value) in frozen {
                out.samples.push(OracleSample {
                    frame_index: row.frame_index,
                    name,
                    value,
                });
            }
            out.samples.push(OracleSample {
                frame_index: row.frame_index,
                name: "vf_rtt_s",
                value: vf_rtt_s,
            });
        }
    }

    for (frame, completed) in &resolved {
        if *completed {
            out.completed.insert(*frame);
        } else {
            out.abandoned.insert(*frame);
        }
    }
    out.in_progress = building.keys().copied().collect();
    out.dangling_feedback = feedback_by_frame
        .keys()
        .filter(|f| !out.completed.contains(f))
        .copied()
        .collect();
    out
}

/// A sample as read back from a metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedSample {
    pub frame_index: u64,
    pub name: String,
    pub value: f64,
}

/// Relative deviation: 0 for exact equality (including both zero),
/// otherwise |a − b| scaled by the larger magnitude.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / f64::max(a.abs(), b.abs())
    }
}

/// One value disagreement beyond tolerance.
#[derive(Clone, Debug)]
pub struct Mismatch {
    pub frame_index: u64,
    pub name: String,
    pub logged: f64,
    pub recomputed: f64,
    pub rel_dev: f64,
}

/// Outcome of comparing a metrics log against the recomputation.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub compared: usize,
    pub tolerance: f64,
    /// Worst relative deviation seen per metric (only metrics present in
    /// either side appear).
    pub per_metric_max_dev: BTreeMap<String, f64>,
    pub mismatches: Vec<Mismatch>,
    /// (frame, metric) recomputed but absent from the log.
    pub missing_from_log: Vec<(u64, String)>,
    /// (frame, metric) logged but not recomputed.
    pub unexpected_in_log: Vec<(u64, String)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
            && self.missing_from_log.is_empty()
            && self.unexpected_in_log.is_empty()
    }

    /// Metric names whose values, presence or absence disagreed.
    pub fn affected_metrics(&self) -> BTreeSet<String> {
        self.mismatches
            .iter()
            .map(|m| m.name.clone())
            .chain(self.missing_from_log.iter().map(|(_, n)| n.clone()))
            .chain(self.unexpected_in_log.iter().map(|(_, n)| n.clone()))
            .collect()
    }
}

/// Compares logged samples against the recomputation, keyed by
/// (frame, metric).
pub fn compare(oracle: &OracleOutput, logged: &[LoggedSample], tolerance: f64) -> ValidationReport {
    let mut report = ValidationReport {
        tolerance,
        ..ValidationReport::default()
    };

    let mut logged_map: BTreeMap<(u64, &str), f64> = BTreeMap::new();
    for s in logged {
        logged_map.insert((s.frame_index, s.name.as_str()), s.value);
    }
    let mut oracle_map: BTreeMap<(u64, &str), f64> = BTreeMap::new();
    for s in &oracle.samples {
        oracle_map.insert((s.frame_index, s.name), s.value);
    }

    for (&(frame, name), &recomputed) in &oracle_map {
        match logged_map.get(&(frame, name)) {
            None => report.missing_from_log.push((frame, name.to_string())),
            Some(&logged_value) => {
                let dev = rel_dev(logged_value, recomputed);
                let entry = report
                    .per_metric_max_dev
                    .entry(name.to_string())
                    .or_insert(0.0);
                if dev > *entry {
                    *entry = dev;
                }
                report.compared += 1;
                if dev > tolerance {
                    report.mismatches.push(Mismatch {
                        frame_index: frame,
                        name: name.to_string(),
                        logged: logged_value,
                        recomputed,
                        rel_dev: dev,
                    });
                }
            }
        }
    }
    for &(frame, name) in logged_map.keys() {
        if !oracle_map.contains_key(&(frame, name)) {
            report.unexpected_in_log.push((frame, name.to_string()));
        }
    }
    report
}

/// Checks the sender-side frame ledger against the recomputed frame fates:
/// statuses must agree frame by frame, and the completion sets must be
/// identical. Returns human-readable disagreements (empty = pass).
pub fn compare_accounting(oracle: &OracleOutput, frames: &[FrameRow]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut listed = BTreeSet::new();
    for row in frames {
        listed.insert(row.frame_index);
        let recomputed = if oracle.completed.contains(&row.frame_index) {
            Some(FrameState::Complete)
        } else if oracle.abandoned.contains(&row.frame_index) {
            Some(FrameState::Abandoned)
        } else if oracle.in_progress.contains(&row.frame_index) {
            Some(FrameState::InProgress)
        } else {
            None
        };
        if row.status != recomputed {
            problems.push(format!(
                "frame {}: ledger says {:?}, trace recomputation says {:?}",
                row.frame_index, row.status, recomputed
            ));
        }
    }
    for frame in oracle
        .completed
        .iter()
        .chain(oracle.abandoned.iter())
        .chain(oracle.in_progress.iter())
    {
        if !listed.contains(frame) {
            problems.push(format!(
                "frame {frame}: present in the trace but missing from the frame ledger"
            ));
        }
    }
    if !oracle.dangling_feedback.is_empty() {
        problems.push(format!(
            "feedback refers to frames the trace never completes: {:?}",
            oracle.dangling_feedback
        ));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-packet frames on a clean 10 ms cadence; packet n of frame f
    /// departs at (f−1)·10 ms and arrives 1 ms + (n−1)·0.1 ms later.
    fn clean_rows(frames: u64) -> (Vec<TraceRow>, Vec<FeedbackRow>) {
        let mut rows = Vec::new();
        let mut feedback = Vec::new();
        let mut seq = 0;
        for f in 1..=frames {
            let depart = (f as i64 - 1) * 10_000_000;
            for idx in 1..=2u32 {
                seq += 1;
                rows.push(TraceRow {
                    seq,
                    frame_index: f,
                    index_in_frame: idx,
                    n_packets_in_frame: 2,
                    total_bits: 8000,
                    departure_server_time_ns: depart,
                    arrival_client_time_ns: Some(
                        depart + 1_000_000 + (idx as i64 - 1) * 100_000,
                    ),
                    drop_reason: None,
                    duplicate_flag: false,
                });
            }
            let completion = depart + 1_100_000;
            feedback.push(FeedbackRow {
                frame_index: f,
                sent_client_time_ns: completion,
                arrival_server_time_ns: completion + 500_000,
                size_bits: 448,
            });
        }
        (rows, feedback)
    }

    #[test]
    fn clean_cadence_yields_the_expected_values() {
        let (rows, feedback) = clean_rows(3);
        let out = recompute(&rows, &feedback, &OracleConfig::default());
        assert_eq!(out.completed.len(), 3);
        assert!(out.abandoned.is_empty());

        let get = |f: u64, n: &str| {
            out.samples
                .iter()
                .find(|s| s.frame_index == f && s.name == n)
                .map(|s| s.value)
        };
        assert_eq!(get(1, "frame_span_s"), Some(0.0001));
        assert_eq!(get(1, "frame_interarrival_s"), None);
        assert_eq!(get(1, "vf_rtt_s"), Some(0.0016));
        assert_eq!(get(2, "frame_interarrival_s"), Some(0.01));
        assert_eq!(get(2, "packet_loss_count"), Some(0.0));
        assert_eq!(get(2, "throughput_bps"), Some(16000.0 / 0.01));
        assert_eq!(get(2, "peak_throughput_bps"), Some(16000.0 / 0.0001));
        // Constant spacing: no delay drift.
        assert_eq!(get(2, "owd_gradient_s"), Some(0.0));
        assert_eq!(get(3, "frame_jitter_s"), Some(0.0));
    }

    #[test]
    fn a_missing_packet_abandons_the_frame_and_counts_as_loss() {
        let (mut rows, mut feedback) = clean_rows(3);
        // Drop packet 2 of frame 2 (seq 4).
        let killed = rows.iter().position(|r| r.seq == 4).unwrap();
        rows[killed].arrival_client_time_ns = None;
        rows[killed].drop_reason = Some(crate::trace::DropKind::Random);
        feedback.retain(|f| f.frame_index != 2);

        let out = recompute(&rows, &feedback, &OracleConfig::default());
        assert!(out.completed.contains(&1) && out.completed.contains(&3));
        assert!(out.abandoned.contains(&2));
        let f3_loss = out
            .samples
            .iter()
            .find(|s| s.frame_index == 3 && s.name == "packet_loss_count")
            .unwrap();
        assert_eq!(f3_loss.value, 1.0);
        // f₋₁ of frame 3 is frame 1: gap spans two cadence periods.
        let f3_gap = out
            .samples
            .iter()
            .find(|s| s.frame_index == 3 && s.name == "frame_interarrival_s")
            .unwrap();
        assert_eq!(f3_gap.value, 0.02);
    }

    #[test]
    fn duplicates_do_not_drive_loss_negative() {
        let (mut rows, feedback) = clean_rows(2);
        let mut dup = rows[2];
        dup.duplicate_flag = true;
        dup.arrival_client_time_ns = Some(dup.arrival_client_time_ns.unwrap() + 50_000);
        rows.push(dup);
        let out = recompute(&rows, &feedback, &OracleConfig::default());
        let loss = out
            .samples
            .iter()
            .find(|s| s.frame_index == 2 && s.name == "packet_loss_count")
            .unwrap();
        assert_eq!(loss.value, 0.0);
        let ratio = out
            .samples
            .iter()
            .find(|s| s.frame_index == 2 && s.name == "packet_loss_ratio")
            .unwrap();
        assert_eq!(ratio.value, 0.0);
    }

    #[test]
    fn comparison_flags_only_the_perturbed_metrics() {
        let (rows, feedback) = clean_rows(10);
        let cfg = OracleConfig::default();
        let baseline = recompute(&rows, &feedback, &cfg);
        let logged: Vec<LoggedSample> = baseline
            .samples
            .iter()
            .map(|s| LoggedSample {
                frame_index: s.frame_index,
                name: s.name.to_string(),
                value: s.value,
            })
            .collect();

        // Against itself: clean pass.
        let report = compare(&baseline, &logged, DEFAULT_REL_TOL);
        assert!(report.passed());
        assert!(report.compared > 0);

        // Perturb one arrival by 1 µs and compare the perturbed
        // recomputation against the unperturbed log.
        let mut perturbed_rows = rows.clone();
        let target = perturbed_rows
            .iter_mut()
            .find(|r| r.frame_index == 5 && r.index_in_frame == 2)
            .unwrap();
        *target.arrival_client_time_ns.as_mut().unwrap() += 1_000;
        let perturbed = recompute(&perturbed_rows, &feedback, &cfg);
        let report = compare(&perturbed, &logged, DEFAULT_REL_TOL);
        assert!(!report.passed());
        let affected = report.affected_metrics();
        // Time-shift of a completing packet moves the span/cadence family
        // and everything downstream of it, but never the loss accounting.
        assert!(affected.contains("frame_span_s"));
        assert!(!affected.contains("packet_loss_count"));
        assert!(!affected.contains("packet_loss_ratio"));
        assert!(!affected.contains("vf_rtt_s"));
    }

    #[test]
    fn an_empty_trace_validates_cleanly() {
        let out = recompute(&[], &[], &OracleConfig::default());
        assert!(out.samples.is_empty());
        let report = compare(&out, &[], DEFAULT_REL_TOL);
        assert!(report.passed());
        assert_eq!(report.compared, 0);
    }

    #[test]
    fn accounting_comparison_spots_status_disagreements() {
        let (rows, feedback) = clean_rows(2);
        let out = recompute(&rows, &feedback, &OracleConfig::default());
        let ledger = vec![
            FrameRow {
                frame_index: 1,
                departure_server_time_ns: 0,
                target_bitrate_bps: 1e6,
                payload_bits: 16000,
                n_packets: 2,
                status: Some(FrameState::Complete),
                completion_client_time_ns: Some(1_100_000),
            },
            FrameRow {
                frame_index: 2,
                departure_server_time_ns: 10_000_000,
                target_bitrate_bps: 1e6,
                payload_bits: 16000,
                n_packets: 2,
                status: Some(FrameState::Abandoned), // wrong on purpose
                completion_client_time_ns: None,
            },
        ];
        let problems = compare_accounting(&out, &ledger);
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("frame 2"), "{}", problems[0]);
    }
}
