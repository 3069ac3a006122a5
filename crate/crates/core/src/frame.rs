//! Receiver-side frame reassembly and the per-frame feedback packet.

use alloc::vec;
use alloc::vec::Vec;

use crate::packet::PacketRecord;
use crate::time::{ClientTime, ServerTime};

/// Lifecycle of a frame at the receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FrameStatus {
    /// Some packets have arrived; the frame is still being assembled.
    InProgress,
    /// Every packet of the frame arrived.
    Complete,
    /// Given up: a newer frame completed first, or assembly ran past the
    /// staleness deadline. Abandoned frames emit no metric samples and never
    /// act as the predecessor of a later frame.
    Abandoned,
}

/// Assembly state for one frame at the receiver.
#[derive(Clone, Debug)]
pub struct FrameAssembly {
    pub frame_index: u64,
    pub n_packets: u32,
    received: Vec<bool>,
    received_count: u32,
    /// Arrival of the earliest packet of this frame (staleness reference and
    /// span lower bound).
    pub first_arrival: Option<ClientTime>,
    /// Arrival of the latest packet of this frame (span upper bound; equals
    /// the completion instant once complete).
    pub last_arrival: Option<ClientTime>,
    /// Departure of the packet with `index_in_frame == 1`.
    pub first_packet_departure: Option<ServerTime>,
    /// Summed on-wire bits over the frame's received packets.
    pub total_bits: u64,
    /// Summed payload bits over the frame's received packets.
    pub payload_bits: u64,
    pub status: FrameStatus,
}

impl FrameAssembly {
    pub fn new(frame_index: u64, n_packets: u32) -> Self {
        FrameAssembly {
            frame_index,
            n_packets,
            received: vec![false; n_packets as usize],
            received_count: 0,
            first_arrival: None,
            last_arrival: None,
            first_packet_departure: None,
            total_bits: 0,
            payload_bits: 0,
            status: FrameStatus::InProgress,
        }
    }

    /// Records a (non-duplicate) packet arrival. Returns `true` when this
    /// arrival completes the frame. Packets for frames that are already
    /// complete or abandoned are ignored by the caller.
    pub fn record_arrival(&mut self, pkt: &PacketRecord, arrival: ClientTime) -> bool {
        debug_assert_eq!(pkt.frame_index, self.frame_index);
        debug_assert_eq!(pkt.n_packets_in_frame, self.n_packets);
        let slot = (pkt.index_in_frame - 1) as usize;
        if self.received[slot] {
            return false; // duplicate of an already-received position
        }
        self.received[slot] = true;
        self.received_count += 1;
        self.total_bits += pkt.total_bits;
        self.payload_bits += pkt.payload_bits;
        match self.first_arrival {
            Some(first) if first <= arrival => {}
            _ => self.first_arrival = Some(arrival),
        }
        match self.last_arrival {
            Some(last) if last >= arrival => {}
            _ => self.last_arrival = Some(arrival),
        }
        if pkt.index_in_frame == 1 {
            self.first_packet_departure = Some(pkt.departure);
        }
        if self.received_count == self.n_packets {
            self.status = FrameStatus::Complete;
            true
        } else {
            false
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == FrameStatus::Complete
    }

    pub fn abandon(&mut self) {
        debug_assert_eq!(self.status, FrameStatus::InProgress);
        self.status = FrameStatus::Abandoned;
    }

    /// Completion instant: the latest packet arrival. Only meaningful once
    /// complete.
    pub fn completion(&self) -> Option<ClientTime> {
        if self.is_complete() {
            self.last_arrival
        } else {
            None
        }
    }
}

/// The small reliable feedback packet the receiver returns to the sender
/// immediately after completing a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StatsFeedback {
    pub frame_index: u64,
    /// Instant the receiver sent the feedback (its clock); equals the frame
    /// completion instant.
    pub sent_client_time: ClientTime,
    /// Instant the feedback reached the sender (sender clock).
    pub arrival_server_time: ServerTime,
    /// On-wire size of the feedback packet.
    pub size_bits: u64,
}

/// On-wire size of a feedback packet: 56 bytes.
pub const FEEDBACK_PACKET_BITS: u64 = 56 * 8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{build_frame_packets, PacketSizes};

    fn mk_frame(n_payload_bits: u64) -> Vec<PacketRecord> {
        let mut seq = 1;
        build_frame_packets(1, n_payload_bits, &PacketSizes::default(), ServerTime(0), &mut seq)
    }

    #[test]
    fn completes_when_all_packets_arrive_in_any_order() {
        let pkts = mk_frame(3 * 11_200);
        let mut asm = FrameAssembly::new(1, 3);
        assert!(!asm.record_arrival(&pkts[2], ClientTime(30)));
        assert!(!asm.record_arrival(&pkts[0], ClientTime(10)));
        assert!(asm.record_arrival(&pkts[1], ClientTime(20)));
        assert_eq!(asm.status, FrameStatus::Complete);
        // Completion is the latest arrival, not the last-processed one.
        assert_eq!(asm.completion(), Some(ClientTime(30)));
        assert_eq!(asm.first_arrival, Some(ClientTime(10)));
        assert_eq!(asm.first_packet_departure, Some(ServerTime(0)));
        assert_eq!(asm.total_bits, 3 * 11_568);
    }

    #[test]
    fn duplicate_positions_do_not_double_count() {
        let pkts = mk_frame(2 * 11_200);
        let mut asm = FrameAssembly::new(1, 2);
        assert!(!asm.record_arrival(&pkts[0], ClientTime(5)));
        assert!(!asm.record_arrival(&pkts[0], ClientTime(6)));
        assert_eq!(asm.total_bits, 11_568);
        assert!(asm.record_arrival(&pkts[1], ClientTime(7)));
    }

    #[test]
    fn abandoned_frames_have_no_completion() {
        let pkts = mk_frame(2 * 11_200);
        let mut asm = FrameAssembly::new(1, 2);
        asm.record_arrival(&pkts[0], ClientTime(5));
        asm.abandon();
        assert_eq!(asm.status, FrameStatus::Abandoned);
        assert_eq!(asm.completion(), None);
    }
}
