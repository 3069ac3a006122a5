//! Wire-level packet records and video-frame fragmentation.
//!
//! A video frame is fragmented into packets of at most
//! [`PacketSizes::max_payload_bits`] payload bits; every packet additionally
//! carries a transport header and a small application prefix, which count
//! toward link occupancy but not toward the video payload. Sequence numbers
//! are global per session and increase in transmission order, so the first
//! packet of a frame continues exactly where the previous frame stopped.

use alloc::vec::Vec;

use crate::time::{ClientTime, ServerTime};

/// Fixed per-packet byte overheads and the fragmentation threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PacketSizes {
    /// Largest payload a single packet may carry, in bytes.
    pub max_payload_bytes: u32,
    /// Transport-layer header bytes (on the wire, not payload).
    pub header_bytes: u32,
    /// Application framing prefix bytes (on the wire, not payload).
    pub prefix_bytes: u32,
}

impl Default for PacketSizes {
    fn default() -> Self {
        PacketSizes {
            max_payload_bytes: 1400,
            header_bytes: 28,
            prefix_bytes: 18,
        }
    }
}

impl PacketSizes {
    pub fn max_payload_bits(&self) -> u64 {
        u64::from(self.max_payload_bytes) * 8
    }

    /// Non-payload bits added to every packet.
    pub fn overhead_bits(&self) -> u64 {
        u64::from(self.header_bytes + self.prefix_bytes) * 8
    }

    /// Total on-wire size of a packet with `payload_bits` of payload.
    pub fn wire_bits(&self, payload_bits: u64) -> u64 {
        payload_bits + self.overhead_bits()
    }
}

/// One transmitted video packet. `arrival` is filled in only once (and if)
/// the link delivers it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PacketRecord {
    /// Global per-session sequence number, starting at 1.
    pub seq: u64,
    /// Frame this packet belongs to, starting at 1.
    pub frame_index: u64,
    /// Position within the frame, starting at 1.
    pub index_in_frame: u32,
    /// Total number of packets in this frame.
    pub n_packets_in_frame: u32,
    /// Video payload bits in this packet.
    pub payload_bits: u64,
    /// On-wire bits (payload + header + prefix).
    pub total_bits: u64,
    /// Departure instant on the sender clock.
    pub departure: ServerTime,
    /// Arrival instant on the receiver clock, if delivered.
    pub arrival: Option<ClientTime>,
}

/// Splits `payload_bits` into per-packet payload sizes: full packets followed
/// by one remainder packet. `payload_bits` must be at least 1.
pub fn fragment_payload(payload_bits: u64, max_payload_bits: u64) -> Vec<u64> {
    assert!(payload_bits >= 1, "a frame carries at least one payload bit");
    assert!(max_payload_bits >= 1, "packets must fit at least one bit");
    let full = (payload_bits / max_payload_bits) as usize;
    let rem = payload_bits % max_payload_bits;
    let mut out = Vec::with_capacity(full + usize::from(rem > 0));
    out.extend(core::iter::repeat(max_payload_bits).take(full));
    if rem > 0 {
        out.push(rem);
    }
    out
}

/// Builds the packets of one frame, consuming sequence numbers from
/// `next_seq` (which is advanced past the frame).
pub fn build_frame_packets(
    frame_index: u64,
    payload_bits: u64,
    sizes: &PacketSizes,
    departure: ServerTime,
    next_seq: &mut u64,
) -> Vec<PacketRecord> {
    let payloads = fragment_payload(payload_bits, sizes.max_payload_bits());
    let n = payloads.len() as u32;
    payloads
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let seq = *next_seq;
            *next_seq += 1;
            PacketRecord {
                seq,
                frame_index,
                index_in_frame: i as u32 + 1,
                n_packets_in_frame: n,
                payload_bits: p,
                total_bits: sizes.wire_bits(p),
                departure,
                arrival: None,
            }
        })
        .collect()
}
