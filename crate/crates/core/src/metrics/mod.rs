//! Per-frame network metrics computed at the receiver from the packet
//! arrival stream, emitted when the sender learns of a frame's completion.
//!
//! The engine consumes packet arrivals in a deterministic order (arrival
//! time, then sequence number) and tracks frame assembly, loss accounting,
//! jitter trackers and the one-way-delay gradient filter. When a frame
//! completes, its sample values are frozen; they are emitted once the
//! matching feedback packet arrives back at the sender, which is also when
//! the video-frame round-trip time becomes known.
//!
//! Definedness rules: the very first completed frame has no predecessor, so
//! only its span, peak throughput and round-trip time exist. Metrics whose
//! denominator would be zero (peak throughput with zero span, instantaneous
//! throughput with identical completion instants) are skipped rather than
//! emitted as zero. Abandoned frames emit nothing and never become the
//! predecessor of a later frame.

mod jitter;
mod kalman;

pub use jitter::{FrameJitterWindow, PacketJitter};
pub use kalman::{GradientFilter, KalmanConfig};

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::frame::{FrameAssembly, FrameStatus, StatsFeedback};
use crate::packet::PacketRecord;
use crate::time::{ClientTime, ServerTime, TimeDelta};

/// Stable metric identifiers. `as_str` values are the wire/log names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MetricName {
    FrameSpanS,
    FrameInterarrivalS,
    VfRttS,
    PacketLossCount,
    PacketLossRatio,
    ThroughputBps,
    PeakThroughputBps,
    FrameJitterS,
    PacketJitterS,
    OwdGradientS,
    FowdS,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::FrameSpanS => "frame_span_s",
            MetricName::FrameInterarrivalS => "frame_interarrival_s",
            MetricName::VfRttS => "vf_rtt_s",
            MetricName::PacketLossCount => "packet_loss_count",
            MetricName::PacketLossRatio => "packet_loss_ratio",
            MetricName::ThroughputBps => "throughput_bps",
            MetricName::PeakThroughputBps => "peak_throughput_bps",
            MetricName::FrameJitterS => "frame_jitter_s",
            MetricName::PacketJitterS => "packet_jitter_s",
            MetricName::OwdGradientS => "owd_gradient_s",
            MetricName::FowdS => "fowd_s",
        }
    }

    pub const ALL: [MetricName; 11] = [
        MetricName::FrameSpanS,
        MetricName::FrameInterarrivalS,
        MetricName::VfRttS,
        MetricName::PacketLossCount,
        MetricName::PacketLossRatio,
        MetricName::ThroughputBps,
        MetricName::PeakThroughputBps,
        MetricName::FrameJitterS,
        MetricName::PacketJitterS,
        MetricName::OwdGradientS,
        MetricName::FowdS,
    ];
}

impl core::fmt::Display for MetricName {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One emitted metric value, tagged with the frame whose completion produced
/// it and the receiver-clock instant of that completion.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSample {
    pub name: MetricName,
    pub frame_index: u64,
    pub value: f64,
    pub emitted_client_time: ClientTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MetricsConfig {
    /// A frame still assembling this long after its first packet arrival is
    /// abandoned.
    pub stale_deadline: TimeDelta,
    /// Number of frame inter-arrival gaps in the frame-jitter window.
    pub frame_jitter_window: usize,
    pub kalman: KalmanConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            stale_deadline: TimeDelta::from_millis(50),
            frame_jitter_window: 16,
            kalman: KalmanConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricsError {
    /// `on_packet` was fed a packet without an arrival timestamp.
    MissingArrival { seq: u64 },
    /// Feedback arrived for a frame that is not the oldest pending one.
    FeedbackMismatch { expected: Option<u64>, got: u64 },
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::MissingArrival { seq } => {
                write!(f, "packet seq {seq} has no arrival timestamp")
            }
            MetricsError::FeedbackMismatch { expected, got } => write!(
                f,
                "feedback for frame {got} does not match pending frame {expected:?}"
            ),
        }
    }
}

impl core::error::Error for MetricsError {}

/// Notification that a frame finished assembling; the caller is responsible
/// for returning the feedback packet to the sender.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameCompletion {
    pub frame_index: u64,
    pub completion: ClientTime,
}

/// Everything produced by one frame's feedback arrival: the emitted samples
/// plus structured values for controller feeds.
#[derive(Clone, Debug)]
pub struct CompletionReport {
    pub frame_index: u64,
    pub completion: ClientTime,
    pub samples: Vec<MetricSample>,
    pub interarrival: Option<TimeDelta>,
    pub vf_rtt: TimeDelta,
    pub peak_throughput_bps: Option<f64>,
    /// Video payload bits of the completed frame.
    pub payload_bits: u64,
    /// True when loss accounting was clamped because more distinct packets
    /// arrived in the interval than the sequence numbers predicted
    /// (duplicates or reordering across a completion boundary).
    pub loss_clamped: bool,
}

/// Values frozen at completion time, awaiting the feedback packet.
#[derive(Clone, Debug)]
struct PendingEmission {
    frame_index: u64,
    completion: ClientTime,
    first_packet_departure: ServerTime,
    span: TimeDelta,
    frame_total_bits: u64,
    frame_payload_bits: u64,
    interarrival: Option<TimeDelta>,
    lost: Option<u64>,
    loss_ratio: Option<f64>,
    loss_clamped: bool,
    throughput_bps: Option<f64>,
    frame_jitter_s: Option<f64>,
    packet_jitter_s: f64,
    owd_gradient_s: Option<f64>,
    fowd_s: Option<f64>,
}

/// Snapshot of the previously completed frame used by difference metrics.
#[derive(Clone, Copy, Debug)]
struct PrevCompleted {
    completion: ClientTime,
    first_packet_departure: ServerTime,
    highest_seq: u64,
}

pub struct MetricsEngine {
    cfg: MetricsConfig,
    /// Frames currently assembling.
    assembling: BTreeMap<u64, FrameAssembly>,
    /// Final status of frames that finished assembling (complete/abandoned).
    finished: BTreeMap<u64, FrameStatus>,
    /// Every sequence number ever received (duplicate detection).
    received_seqs: BTreeSet<u64>,
    highest_seq: u64,
    /// Distinct packets and their on-wire bits received since the previous
    /// completion.
    interval_packets: u64,
    interval_bits: u64,
    packet_jitter: PacketJitter,
    frame_jitter: FrameJitterWindow,
    gradient: GradientFilter,
    prev: Option<PrevCompleted>,
    pending: VecDeque<PendingEmission>,
    duplicates_seen: u64,
    last_arrival: Option<ClientTime>,
}

impl MetricsEngine {
    pub fn new(cfg: MetricsConfig) -> Self {
        MetricsEngine {
            assembling: BTreeMap::new(),
            finished: BTreeMap::new(),
            received_seqs: BTreeSet::new(),
            highest_seq: 0,
            interval_packets: 0,
            interval_bits: 0,
            packet_jitter: PacketJitter::new(),
            frame_jitter: FrameJitterWindow::new(cfg.frame_jitter_window),
            gradient: GradientFilter::new(cfg.kalman),
            prev: None,
            pending: VecDeque::new(),
            duplicates_seen: 0,
            last_arrival: None,
            cfg,
        }
    }

    /// Feeds one delivered packet. Packets must be fed in (arrival, seq)
    /// order. Returns a completion notice when this arrival finishes a frame.
    pub fn on_packet(&mut self, pkt: &PacketRecord) -> Result<Option<FrameCompletion>, MetricsError> {
        let arrival = pkt.arrival.ok_or(MetricsError::MissingArrival { seq: pkt.seq })?;
        debug_assert!(
            self.last_arrival.map_or(true, |t| arrival >= t),
            "packets must be processed in arrival order"
        );
        self.last_arrival = Some(arrival);

        self.abandon_stale(arrival);

        // Jitter sees the raw arrival process, duplicates included.
        self.packet_jitter.on_packet(arrival, pkt.departure);

        if !self.received_seqs.insert(pkt.seq) {
            self.duplicates_seen += 1;
            return Ok(None);
        }
        if pkt.seq > self.highest_seq {
            self.highest_seq = pkt.seq;
        }
        self.interval_packets += 1;
        self.interval_bits += pkt.total_bits;

        if self.finished.contains_key(&pkt.frame_index) {
            // Straggler for a frame that already completed or was abandoned:
            // it still counted toward the interval set above.
            return Ok(None);
        }

        let asm = self
            .assembling
            .entry(pkt.frame_index)
            .or_insert_with(|| FrameAssembly::new(pkt.frame_index, pkt.n_packets_in_frame));
        if asm.record_arrival(pkt, arrival) {
            let completion = self.complete_frame(pkt.frame_index);
            Ok(Some(completion))
        } else {
            Ok(None)
        }
    }

    /// Emits the sample batch for the oldest completed frame once its
    /// feedback packet has returned to the sender.
    pub fn on_frame_complete(
        &mut self,
        feedback: &StatsFeedback,
    ) -> Result<CompletionReport, MetricsError> {
        let front = self.pending.front().map(|p| p.frame_index);
        if front != Some(feedback.frame_index) {
            return Err(MetricsError::FeedbackMismatch {
                expected: front,
                got: feedback.frame_index,
            });
        }
        let p = self.pending.pop_front().expect("checked above");

        let vf_rtt = feedback.arrival_server_time - p.first_packet_departure;
        let at = p.completion;
        let mut samples = Vec::with_capacity(11);
        let mut push = |name: MetricName, value: f64| {
            samples.push(MetricSample {
                name,
                frame_index: p.frame_index,
                value,
                emitted_client_time: at,
            })
        };

        push(MetricName::FrameSpanS, p.span.as_secs_f64());
        if let Some(gap) = p.interarrival {
            push(MetricName::FrameInterarrivalS, gap.as_secs_f64());
        }
        push(MetricName::VfRttS, vf_rtt.as_secs_f64());
        if let Some(lost) = p.lost {
            push(MetricName::PacketLossCount, lost as f64);
        }
        if let Some(ratio) = p.loss_ratio {
            push(MetricName::PacketLossRatio, ratio);
        }
        if let Some(th) = p.throughput_bps {
            push(MetricName::ThroughputBps, th);
        }
        let peak = if p.span.as_nanos() > 0 {
            let v = p.frame_total_bits as f64 / p.span.as_secs_f64();
            push(MetricName::PeakThroughputBps, v);
            Some(v)
        } else {
            None
        };
        if let Some(fj) = p.frame_jitter_s {
            push(MetricName::FrameJitterS, fj);
        }
        if p.interarrival.is_some() {
            push(MetricName::PacketJitterS, p.packet_jitter_s);
        }
        if let Some(owd) = p.owd_gradient_s {
            push(MetricName::OwdGradientS, owd);
        }
        if let Some(fowd) = p.fowd_s {
            push(MetricName::FowdS, fowd);
        }

        Ok(CompletionReport {
            frame_index: p.frame_index,
            completion: p.completion,
            samples,
            interarrival: p.interarrival,
            vf_rtt,
            peak_throughput_bps: peak,
            payload_bits: p.frame_payload_bits,
            loss_clamped: p.loss_clamped,
        })
    }

    fn complete_frame(&mut self, frame_index: u64) -> FrameCompletion {
        let asm = self
            .assembling
            .remove(&frame_index)
            .expect("completing frame must be assembling");
        self.finished.insert(frame_index, FrameStatus::Complete);

        // Older frames lost the race; they will never complete now.
        let stale: Vec<u64> = self
            .assembling
            .range(..frame_index)
            .map(|(&f, _)| f)
            .collect();
        for f in stale {
            let mut a = self.assembling.remove(&f).expect("key from range");
            a.abandon();
            self.finished.insert(f, FrameStatus::Abandoned);
        }

        let completion = asm.completion().expect("frame is complete");
        let first_arrival = asm.first_arrival.expect("complete frame has arrivals");
        let span = completion - first_arrival;
        let first_packet_departure = asm
            .first_packet_departure
            .expect("complete frame received packet 1");

        let mut pending = PendingEmission {
            frame_index,
            completion,
            first_packet_departure,
            span,
            frame_total_bits: asm.total_bits,
            frame_payload_bits: asm.payload_bits,
            interarrival: None,
            lost: None,
            loss_ratio: None,
            loss_clamped: false,
            throughput_bps: None,
            frame_jitter_s: None,
            packet_jitter_s: self.packet_jitter.value(),
            owd_gradient_s: None,
            fowd_s: None,
        };

        if let Some(prev) = self.prev {
            let gap = completion - prev.completion;
            pending.interarrival = Some(gap);

            let expected = self.highest_seq - prev.highest_seq;
            let received = self.interval_packets;
            if received > expected {
                pending.lost = Some(0);
                pending.loss_clamped = true;
            } else {
                pending.lost = Some(expected - received);
            }
            pending.loss_ratio = Some(if expected == 0 {
                0.0
            } else {
                pending.lost.unwrap() as f64 / expected as f64
            });

            if gap.as_nanos() > 0 {
                pending.throughput_bps = Some(self.interval_bits as f64 / gap.as_secs_f64());
            }

            self.frame_jitter.push(gap.as_secs_f64());
            pending.frame_jitter_s = self.frame_jitter.value();

            let owd = gap.as_secs_f64()
                - (first_packet_departure - prev.first_packet_departure).as_secs_f64();
            pending.owd_gradient_s = Some(owd);
            pending.fowd_s = Some(self.gradient.update(owd));
        }

        self.interval_packets = 0;
        self.interval_bits = 0;
        self.prev = Some(PrevCompleted {
            completion,
            first_packet_departure,
            highest_seq: self.highest_seq,
        });
        self.pending.push_back(pending);

        FrameCompletion {
            frame_index,
            completion,
        }
    }

    fn abandon_stale(&mut self, now: ClientTime) {
        let deadline = self.cfg.stale_deadline;
        let stale: Vec<u64> = self
            .assembling
            .iter()
            .filter(|(_, a)| {
                a.first_arrival
                    .map_or(false, |first| now - first > deadline)
            })
            .map(|(&f, _)| f)
            .collect();
        for f in stale {
            let mut a = self.assembling.remove(&f).expect("key from filter");
            a.abandon();
            self.finished.insert(f, FrameStatus::Abandoned);
        }
    }

    /// Status of a frame the engine has seen packets for.
    pub fn frame_status(&self, frame_index: u64) -> Option<FrameStatus> {
        self.finished
            .get(&frame_index)
            .copied()
            .or_else(|| self.assembling.get(&frame_index).map(|a| a.status))
    }

    /// Final statuses of all frames that finished assembling.
    pub fn finished_frames(&self) -> &BTreeMap<u64, FrameStatus> {
        &self.finished
    }

    /// Frames still assembling (in progress at end of input).
    pub fn in_progress_frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.assembling.keys().copied()
    }

    pub fn duplicates_seen(&self) -> u64 {
        self.duplicates_seen
    }

    pub fn highest_seq(&self) -> u64 {
        self.highest_seq
    }
}
