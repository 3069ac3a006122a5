//! Deterministic virtual-time event loop binding traffic generation, the
//! link, frame assembly, metrics, and a bitrate controller into streaming
//! sessions; multiple sessions share one downlink queue.
//!
//! Event ordering at equal timestamps is fixed: phase boundaries, then
//! packet deliveries, then feedback arrivals, then controller steps, then
//! frame generation, then audio generation; remaining ties break by session,
//! sequence, and finally creation order. Controllers therefore see all
//! feedback up to T before deciding at T, and a frame generated at T uses
//! the bitrate decided at T.
//!
//! The simulation timeline is the server clock. Client-side timestamps are
//! produced through the ground-truth clock offset exactly once, at packet
//! arrival; all measurement code operates on client timestamps alone.

mod traffic;

pub use traffic::{
    FrameSizeModel, TrafficConfig, TrafficError, AUDIO_PACKET_BITS, AUDIO_PERIOD_NANOS,
};

use crate::abr::{
    BitrateController, ControllerBuildError, ControllerConfig, DecisionRecord, FrameFeedback,
};
use crate::frame::{FrameStatus, StatsFeedback, FEEDBACK_PACKET_BITS};
use crate::link::{DropLedger, DropReason, Link, LinkScenario, PacketOutcome, ScenarioError};
use crate::metrics::{MetricName, MetricSample, MetricsConfig, MetricsEngine, MetricsError};
use crate::packet::{build_frame_packets, PacketRecord};
use crate::time::{ClientTime, ServerTime, TimeDelta};
use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ledger entries for a session's audio companion stream are booked under
/// `session + AUDIO_SESSION_OFFSET`, keeping video accounting exact.
pub const AUDIO_SESSION_OFFSET: u32 = 1 << 16;

/// One streaming session: its traffic shape, controller, and clocks.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionSpec {
    #[cfg_attr(feature = "serde", serde(default))]
    pub traffic: TrafficConfig,
    pub controller: ControllerConfig,
    /// Client clock minus server clock, seconds. Metrics must be invariant
    /// to it wherever they difference same-clock timestamps.
    #[cfg_attr(feature = "serde", serde(default))]
    pub client_offset_s: f64,
    /// Seed for the session's frame-size draws.
    #[cfg_attr(feature = "serde", serde(default))]
    pub rng_seed: u64,
}

/// A full run: one link scenario shared by one or more sessions.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunConfig {
    #[cfg_attr(feature = "serde", serde(default))]
    pub scenario: LinkScenario,
    pub duration_s: f64,
    pub sessions: Vec<SessionSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub metrics: MetricsConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    Traffic(TrafficError),
    Scenario(ScenarioError),
    Controller(ControllerBuildError),
    /// Duration, frame cadence, or controller period does not resolve to at
    /// least one nanosecond.
    BadTiming,
    NoSessions,
    Metrics(MetricsError),
    /// Post-run accounting failed to reconcile; indicates an internal bug.
    Accounting(String),
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::Traffic(e) => write!(f, "traffic config: {e}"),
            SimError::Scenario(e) => write!(f, "link scenario: {e}"),
            SimError::Controller(e) => write!(f, "controller config: {e}"),
            SimError::BadTiming => write!(f, "durations and periods must be at least 1 ns"),
            SimError::NoSessions => write!(f, "at least one session is required"),
            SimError::Metrics(e) => write!(f, "metrics engine: {e}"),
            SimError::Accounting(s) => write!(f, "accounting mismatch: {s}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<TrafficError> for SimError {
    fn from(e: TrafficError) -> Self {
        SimError::Traffic(e)
    }
}
impl From<ScenarioError> for SimError {
    fn from(e: ScenarioError) -> Self {
        SimError::Scenario(e)
    }
}
impl From<ControllerBuildError> for SimError {
    fn from(e: ControllerBuildError) -> Self {
        SimError::Controller(e)
    }
}
impl From<MetricsError> for SimError {
    fn from(e: MetricsError) -> Self {
        SimError::Metrics(e)
    }
}

/// One packet event as recorded in the trace: creation at transmit, arrival
/// or drop filled in by the corresponding event. A row that ends with
/// neither was still in flight at the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PacketEventRow {
    pub seq: u64,
    pub frame_index: u64,
    pub index_in_frame: u32,
    pub n_packets_in_frame: u32,
    pub total_bits: u64,
    pub departure: ServerTime,
    pub arrival: Option<ClientTime>,
    pub drop_reason: Option<DropReason>,
    pub duplicate: bool,
}

/// Per-frame ground truth from the sender's perspective.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameRecord {
    pub frame_index: u64,
    pub departure: ServerTime,
    pub target_bitrate_bps: f64,
    pub payload_bits: u64,
    pub n_packets: u32,
    /// Final assembly status; `None` when no packet of the frame ever
    /// arrived.
    pub status: Option<FrameStatus>,
    pub completion: Option<ClientTime>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionCounters {
    pub frames_sent: u64,
    pub frames_completed: u64,
    pub frames_abandoned: u64,
    pub packets_injected: u64,
    /// Delivered packet events, duplicates included.
    pub packets_delivered: u64,
    pub packets_in_flight: u64,
    pub duplicates_created: u64,
    pub audio_injected: u64,
    pub audio_delivered: u64,
}

/// Everything one session produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionResult {
    pub session: u32,
    pub client_offset_s: f64,
    pub fps: f64,
    pub duration_s: f64,
    pub frames: Vec<FrameRecord>,
    pub packets: Vec<PacketEventRow>,
    pub metrics: Vec<MetricSample>,
    pub decisions: Vec<DecisionRecord>,
    /// Feedback packets that reached the server, in arrival order.
    pub feedback: Vec<StatsFeedback>,
    /// This session's slice of the link ledger (video stream only).
    pub ledger: DropLedger,
    pub counters: SessionCounters,
}

impl SessionResult {
    /// Summary over `[start_s, end_s)` of the server timeline.
    pub fn interval_summary(&self, start_s: f64, end_s: f64) -> IntervalSummary {
        summarize_interval(
            &self.metrics,
            &self.decisions,
            &self.feedback,
            TimeDelta::from_secs_f64(self.client_offset_s),
            start_s,
            end_s,
        )
    }
}

/// Aggregates in the shape of the per-phase results tables: round-trip
/// mean and spread, delivered frame rate, lost packets, bitrate mean and
/// spread.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntervalSummary {
    pub start_s: f64,
    pub end_s: f64,
    pub vf_rtt_mean_ms: f64,
    pub vf_rtt_std_ms: f64,
    pub vf_rtt_count: u64,
    /// Completed frames per second of interval.
    pub fdr_fps: f64,
    /// Spread of the delivered frame rate: sample standard deviation of
    /// completion counts over the whole one-second bins inside the interval
    /// (zero when fewer than two whole bins fit).
    pub fdr_std_fps: f64,
    /// Sum of the per-frame lost-packet metric over the interval.
    pub packets_lost: u64,
    pub bitrate_mean_mbps: f64,
    pub bitrate_std_mbps: f64,
    pub decision_count: u64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, libm::sqrt(var))
}

/// Recomputes an [`IntervalSummary`] from raw logs, so emitted summaries are
/// reproducible by any holder of the logs. Sample membership: metric samples
/// by emission instant, frame completions by feedback send instant,
/// decisions by decision instant — all mapped to the server timeline,
/// half-open `[start_s, end_s)`.
pub fn summarize_interval(
    metrics: &[MetricSample],
    decisions: &[DecisionRecord],
    feedback: &[StatsFeedback],
    client_offset: TimeDelta,
    start_s: f64,
    end_s: f64,
) -> IntervalSummary {
    let start = ServerTime(TimeDelta::from_secs_f64(start_s).as_nanos());
    let end = ServerTime(TimeDelta::from_secs_f64(end_s).as_nanos());
    let in_window = |t: ServerTime| t >= start && t < end;

    let mut vf_rtt_ms: Vec<f64> = Vec::new();
    let mut packets_lost = 0u64;
    for m in metrics {
        if !in_window(m.emitted_client_time.to_server(client_offset)) {
            continue;
        }
        match m.name {
            MetricName::VfRttS => vf_rtt_ms.push(m.value * 1e3),
            MetricName::PacketLossCount => packets_lost += libm::round(m.value) as u64,
            _ => {}
        }
    }
    let completion_times: Vec<ServerTime> = feedback
        .iter()
        .map(|f| f.sent_client_time.to_server(client_offset))
        .filter(|t| in_window(*t))
        .collect();
    let completed = completion_times.len() as u64;
    let whole_bins = ((end.0 - start.0) / 1_000_000_000) as usize;
    let fdr_std = if whole_bins >= 2 {
        let mut bins = vec![0.0f64; whole_bins];
        for t in &completion_times {
            let bin = ((t.0 - start.0) / 1_000_000_000) as usize;
            if bin < whole_bins {
                bins[bin] += 1.0;
            }
        }
        mean_std(&bins).1
    } else {
        0.0
    };
    let bitrates_mbps: Vec<f64> = decisions
        .iter()
        .filter(|d| in_window(d.time))
        .map(|d| d.bitrate_bps / 1e6)
        .collect();

    let (vf_mean, vf_std) = mean_std(&vf_rtt_ms);
    let (br_mean, br_std) = mean_std(&bitrates_mbps);
    let span_s = end_s - start_s;
    IntervalSummary {
        start_s,
        end_s,
        vf_rtt_mean_ms: vf_mean,
        vf_rtt_std_ms: vf_std,
        vf_rtt_count: vf_rtt_ms.len() as u64,
        fdr_fps: if span_s > 0.0 {
            completed as f64 / span_s
        } else {
            0.0
        },
        fdr_std_fps: fdr_std,
        packets_lost,
        bitrate_mean_mbps: br_mean,
        bitrate_std_mbps: br_std,
        decision_count: bitrates_mbps.len() as u64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EventKind {
    Boundary,
    Delivery { row: usize },
    Feedback,
    Controller,
    FrameGen,
    AudioGen,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: ServerTime,
    class: u8,
    session: u32,
    a: u64,
    eid: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (i64, u8, u32, u64, u64) {
        (self.time.as_nanos(), self.class, self.session, self.a, self.eid)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

const CLASS_BOUNDARY: u8 = 0;
const CLASS_DELIVERY: u8 = 1;
const CLASS_FEEDBACK: u8 = 2;
const CLASS_CONTROLLER: u8 = 3;
const CLASS_FRAME_GEN: u8 = 4;
const CLASS_AUDIO_GEN: u8 = 5;

struct SessionRt {
    traffic: TrafficConfig,
    offset: TimeDelta,
    frame_gap: TimeDelta,
    controller: Box<dyn BitrateController>,
    period: Option<TimeDelta>,
    engine: MetricsEngine,
    rng: ChaCha8Rng,
    next_seq: u64,
    audio_seq: u64,
    last_departure: Option<ServerTime>,
    k: u64,
    rows: Vec<PacketEventRow>,
    frames: Vec<FrameRecord>,
    metrics: Vec<MetricSample>,
    decisions: Vec<DecisionRecord>,
    feedback: Vec<StatsFeedback>,
    counters: SessionCounters,
}

/// Runs one session over its own link.
pub fn run_session(
    session: SessionSpec,
    scenario: &LinkScenario,
    duration_s: f64,
) -> Result<SessionResult, SimError> {
    let mut results = run(&RunConfig {
        scenario: scenario.clone(),
        duration_s,
        sessions: alloc::vec![session],
        metrics: MetricsConfig::default(),
    })?;
    Ok(results.pop().expect("one session in, one result out"))
}

/// Runs every session of `config` over one shared link.
pub fn run(config: &RunConfig) -> Result<Vec<SessionResult>, SimError> {
    if config.sessions.is_empty() {
        return Err(SimError::NoSessions);
    }
    if config.sessions.len() >= AUDIO_SESSION_OFFSET as usize {
        return Err(SimError::NoSessions);
    }
    if !(config.duration_s > 0.0) || !config.duration_s.is_finite() {
        return Err(SimError::BadTiming);
    }
    let horizon = ServerTime(TimeDelta::from_secs_f64(config.duration_s).as_nanos());
    if horizon.as_nanos() <= 0 {
        return Err(SimError::BadTiming);
    }

    let mut link = Link::new(&config.scenario)?;

    let mut sessions: Vec<SessionRt> = Vec::with_capacity(config.sessions.len());
    for spec in &config.sessions {
        spec.traffic.validate()?;
        let controller = spec.controller.build()?;
        let period = controller.period();
        if let Some(p) = period {
            if p.as_nanos() <= 0 {
                return Err(SimError::BadTiming);
            }
        }
        let frame_gap = TimeDelta::from_secs_f64(1.0 / spec.traffic.fps);
        if frame_gap.as_nanos() <= 0 {
            return Err(SimError::BadTiming);
        }
        sessions.push(SessionRt {
            traffic: spec.traffic,
            offset: TimeDelta::from_secs_f64(spec.client_offset_s),
            frame_gap,
            controller,
            period,
            engine: MetricsEngine::new(config.metrics),
            rng: ChaCha8Rng::seed_from_u64(spec.rng_seed),
            next_seq: 1,
            audio_seq: 0,
            last_departure: None,
            k: 0,
            rows: Vec::new(),
            frames: Vec::new(),
            metrics: Vec::new(),
            decisions: Vec::new(),
            feedback: Vec::new(),
            counters: SessionCounters::default(),
        });
    }

    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut eid = 0u64;
    let push = |heap: &mut BinaryHeap<Reverse<Event>>,
                    eid: &mut u64,
                    time: ServerTime,
                    class: u8,
                    session: u32,
                    a: u64,
                    kind: EventKind| {
        *eid += 1;
        heap.push(Reverse(Event {
            time,
            class,
            session,
            a,
            eid: *eid,
            kind,
        }));
    };

    for &b in link.boundary_times() {
        if b > ServerTime(0) && b <= horizon {
            push(&mut heap, &mut eid, b, CLASS_BOUNDARY, 0, 0, EventKind::Boundary);
        }
    }
    for (s, rt) in sessions.iter().enumerate() {
        let s = s as u32;
        push(
            &mut heap,
            &mut eid,
            ServerTime(0),
            CLASS_FRAME_GEN,
            s,
            1,
            EventKind::FrameGen,
        );
        if let Some(p) = rt.period {
            push(
                &mut heap,
                &mut eid,
                ServerTime(0) + p,
                CLASS_CONTROLLER,
                s,
                0,
                EventKind::Controller,
            );
        }
        if rt.traffic.include_audio {
            push(
                &mut heap,
                &mut eid,
                ServerTime(0),
                CLASS_AUDIO_GEN,
                s,
                0,
                EventKind::AudioGen,
            );
        }
    }

    let uplink = link.uplink_delay();

    while let Some(Reverse(ev)) = heap.pop() {
        if ev.time > horizon {
            break;
        }
        let s = ev.session as usize;
        match ev.kind {
            EventKind::Boundary => {
                link.advance_to(ev.time);
            }
            EventKind::Delivery { row } => {
                let rt = &mut sessions[s];
                let r = rt.rows[row];
                if link.was_flushed(ev.session, r.seq, r.duplicate) {
                    rt.rows[row].drop_reason = Some(DropReason::Overflow);
                    continue;
                }
                let arrival = ev.time.to_client(rt.offset);
                rt.rows[row].arrival = Some(arrival);
                rt.counters.packets_delivered += 1;
                let pkt = PacketRecord {
                    seq: r.seq,
                    frame_index: r.frame_index,
                    index_in_frame: r.index_in_frame,
                    n_packets_in_frame: r.n_packets_in_frame,
                    payload_bits: r.total_bits - rt.traffic.packet.overhead_bits(),
                    total_bits: r.total_bits,
                    departure: r.departure,
                    arrival: Some(arrival),
                };
                if let Some(done) = rt.engine.on_packet(&pkt)? {
                    let fr = &mut rt.frames[(done.frame_index - 1) as usize];
                    fr.completion = Some(done.completion);
                    rt.counters.frames_completed += 1;
                    let fb_arrival = done.completion.to_server(rt.offset) + uplink;
                    push(
                        &mut heap,
                        &mut eid,
                        fb_arrival,
                        CLASS_FEEDBACK,
                        ev.session,
                        done.frame_index,
                        EventKind::Feedback,
                    );
                }
            }
            EventKind::Feedback => {
                let rt = &mut sessions[s];
                let fb = StatsFeedback {
                    frame_index: ev.a,
                    sent_client_time: (ev.time - uplink).to_client(rt.offset),
                    arrival_server_time: ev.time,
                    size_bits: FEEDBACK_PACKET_BITS,
                };
                let report = rt.engine.on_frame_complete(&fb)?;
                rt.feedback.push(fb);
                rt.metrics.extend(report.samples);
                rt.controller.on_frame_feedback(
                    ev.time,
                    &FrameFeedback {
                        frame_index: report.frame_index,
                        interarrival: report.interarrival,
                        vf_rtt: report.vf_rtt,
                        peak_throughput_bps: report.peak_throughput_bps,
                        payload_bits: report.payload_bits,
                        network_delay: report.vf_rtt,
                    },
                );
            }
            EventKind::Controller => {
                let rt = &mut sessions[s];
                rt.k += 1;
                let decision = rt.controller.adjust(rt.k, ev.time);
                rt.decisions.push(decision);
                let period = rt.period.expect("controller events only exist with a period");
                let next = ev.time + period;
                if next <= horizon {
                    push(
                        &mut heap,
                        &mut eid,
                        next,
                        CLASS_CONTROLLER,
                        ev.session,
                        0,
                        EventKind::Controller,
                    );
                }
            }
            EventKind::FrameGen => {
                if ev.time >= horizon {
                    continue;
                }
                let rt = &mut sessions[s];
                let n = ev.a;
                let target = rt.controller.target_bitrate_bps();
                let payload = rt.traffic.frame_payload_bits(target, n, &mut rt.rng);
                let packets = build_frame_packets(
                    n,
                    payload,
                    &rt.traffic.packet,
                    ev.time,
                    &mut rt.next_seq,
                );
                let gap = rt.last_departure.map(|d| ev.time - d);
                rt.controller.on_frame_departure(ev.time, gap);
                rt.last_departure = Some(ev.time);
                rt.counters.frames_sent += 1;
                rt.frames.push(FrameRecord {
                    frame_index: n,
                    departure: ev.time,
                    target_bitrate_bps: target,
                    payload_bits: payload,
                    n_packets: packets.len() as u32,
                    status: None,
                    completion: None,
                });
                for p in &packets {
                    rt.counters.packets_injected += 1;
                    let out = link.transmit(ev.session, p.seq, p.total_bits, ev.time);
                    let row_template = PacketEventRow {
                        seq: p.seq,
                        frame_index: n,
                        index_in_frame: p.index_in_frame,
                        n_packets_in_frame: p.n_packets_in_frame,
                        total_bits: p.total_bits,
                        departure: ev.time,
                        arrival: None,
                        drop_reason: None,
                        duplicate: false,
                    };
                    let row_idx = rt.rows.len();
                    let mut row = row_template;
                    match out.packet {
                        PacketOutcome::Delivered { arrival } => {
                            push(
                                &mut heap,
                                &mut eid,
                                arrival,
                                CLASS_DELIVERY,
                                ev.session,
                                p.seq,
                                EventKind::Delivery { row: row_idx },
                            );
                        }
                        PacketOutcome::Dropped { reason } => {
                            row.drop_reason = Some(reason);
                        }
                    }
                    rt.rows.push(row);
                    if let Some(dup_out) = out.duplicate {
                        rt.counters.duplicates_created += 1;
                        let dup_idx = rt.rows.len();
                        let mut dup_row = row_template;
                        dup_row.duplicate = true;
                        match dup_out {
                            PacketOutcome::Delivered { arrival } => {
                                push(
                                    &mut heap,
                                    &mut eid,
                                    arrival,
                                    CLASS_DELIVERY,
                                    ev.session,
                                    p.seq,
                                    EventKind::Delivery { row: dup_idx },
                                );
                            }
                            PacketOutcome::Dropped { reason } => {
                                dup_row.drop_reason = Some(reason);
                            }
                        }
                        rt.rows.push(dup_row);
                    }
                }
                let next = ev.time + rt.frame_gap;
                if next < horizon {
                    push(
                        &mut heap,
                        &mut eid,
                        next,
                        CLASS_FRAME_GEN,
                        ev.session,
                        n + 1,
                        EventKind::FrameGen,
                    );
                }
            }
            EventKind::AudioGen => {
                if ev.time >= horizon {
                    continue;
                }
                let rt = &mut sessions[s];
                rt.audio_seq += 1;
                rt.counters.audio_injected += 1;
                let out = link.transmit(
                    ev.session + AUDIO_SESSION_OFFSET,
                    rt.audio_seq,
                    AUDIO_PACKET_BITS,
                    ev.time,
                );
                if matches!(out.packet, PacketOutcome::Delivered { .. }) {
                    rt.counters.audio_delivered += 1;
                }
                if matches!(out.duplicate, Some(PacketOutcome::Delivered { .. })) {
                    rt.counters.audio_delivered += 1;
                }
                let next = ev.time + TimeDelta::from_nanos(AUDIO_PERIOD_NANOS);
                if next < horizon {
                    push(
                        &mut heap,
                        &mut eid,
                        next,
                        CLASS_AUDIO_GEN,
                        ev.session,
                        0,
                        EventKind::AudioGen,
                    );
                }
            }
        }
    }

    let mut results = Vec::with_capacity(sessions.len());
    for (s, mut rt) in sessions.into_iter().enumerate() {
        let s = s as u32;
        for row in &mut rt.rows {
            if row.arrival.is_none()
                && row.drop_reason.is_none()
                && link.was_flushed(s, row.seq, row.duplicate)
            {
                row.drop_reason = Some(DropReason::Overflow);
            }
        }
        for fr in &mut rt.frames {
            fr.status = rt.engine.frame_status(fr.frame_index);
        }
        rt.counters.frames_abandoned = rt
            .frames
            .iter()
            .filter(|f| f.status == Some(FrameStatus::Abandoned))
            .count() as u64;
        rt.counters.packets_in_flight = rt
            .rows
            .iter()
            .filter(|r| r.arrival.is_none() && r.drop_reason.is_none())
            .count() as u64;

        let ledger = link.ledger().for_session(s);
        let audio_flushed = link.flushed_count(s + AUDIO_SESSION_OFFSET);
        reconcile(s, &rt, &ledger, link.ledger(), audio_flushed)?;

        results.push(SessionResult {
            session: s,
            client_offset_s: rt.offset.as_secs_f64(),
            fps: rt.traffic.fps,
            duration_s: config.duration_s,
            frames: rt.frames,
            packets: rt.rows,
            metrics: rt.metrics,
            decisions: rt.decisions,
            feedback: rt.feedback,
            ledger,
            counters: rt.counters,
        });
    }
    Ok(results)
}

/// Cross-checks row states against the link ledger; any disagreement is an
/// internal bug surfaced as an error rather than silently wrong artifacts.
fn reconcile(
    session: u32,
    rt: &SessionRt,
    ledger: &DropLedger,
    full_ledger: &DropLedger,
    audio_flushed: u64,
) -> Result<(), SimError> {
    use alloc::format;
    let rows = &rt.rows;
    let delivered = rows.iter().filter(|r| r.arrival.is_some()).count() as u64;
    let random = rows
        .iter()
        .filter(|r| r.drop_reason == Some(DropReason::Random))
        .count() as u64;
    let overflow = rows
        .iter()
        .filter(|r| r.drop_reason == Some(DropReason::Overflow))
        .count() as u64;
    let in_flight = rt.counters.packets_in_flight;
    let dup_rows = rows.iter().filter(|r| r.duplicate).count() as u64;

    if delivered != rt.counters.packets_delivered {
        return Err(SimError::Accounting(format!(
            "session {session}: delivered rows {delivered} vs counter {}",
            rt.counters.packets_delivered
        )));
    }
    if dup_rows != ledger.duplicated.len() as u64 {
        return Err(SimError::Accounting(format!(
            "session {session}: duplicate rows {dup_rows} vs ledger {}",
            ledger.duplicated.len()
        )));
    }
    if random != ledger.random_loss.len() as u64 {
        return Err(SimError::Accounting(format!(
            "session {session}: random-loss rows {random} vs ledger {}",
            ledger.random_loss.len()
        )));
    }
    if overflow != ledger.queue_overflow.len() as u64 {
        return Err(SimError::Accounting(format!(
            "session {session}: overflow rows {overflow} vs ledger {}",
            ledger.queue_overflow.len()
        )));
    }
    if rt.counters.packets_injected + dup_rows != delivered + random + overflow + in_flight {
        return Err(SimError::Accounting(format!(
            "session {session}: flow conservation failed"
        )));
    }

    // Audio outcomes are booked at transmit time; a later phase-change flush
    // moves a booked delivery into the overflow ledger, so tombstones appear
    // on both sides of the balance.
    let audio = full_ledger.for_session(session + AUDIO_SESSION_OFFSET);
    let audio_drops = audio.random_loss.len() as u64 + audio.queue_overflow.len() as u64;
    if rt.counters.audio_injected + audio.duplicated.len() as u64 + audio_flushed
        != rt.counters.audio_delivered + audio_drops
    {
        return Err(SimError::Accounting(format!(
            "session {session}: audio flow conservation failed"
        )));
    }
    Ok(())
}
