//! Frame-burst traffic shape: one encoded video frame per `1/fps` interval,
//! transmitted as a single burst of packets.

use crate::packet::PacketSizes;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-frame payload size as a function of the target bitrate.
///
/// The baseline size is `bitrate / fps` bits. With `relative_jitter > 0`
/// each frame is scaled by a normal draw `N(1, relative_jitter)`, floored at
/// 0.05 so sizes stay positive. With `large_frame_period > 0`, every
/// `large_frame_period`-th frame is additionally scaled by
/// `large_frame_factor` (a crude stand-in for intra-coded frames).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FrameSizeModel {
    pub relative_jitter: f64,
    pub large_frame_factor: f64,
    /// 0 disables periodic large frames.
    pub large_frame_period: u64,
}

impl Default for FrameSizeModel {
    fn default() -> Self {
        FrameSizeModel {
            relative_jitter: 0.0,
            large_frame_factor: 1.0,
            large_frame_period: 0,
        }
    }
}

/// Sender traffic parameters for one session.
///
/// `include_tracking_uplink` and `include_audio` model the two companion
/// streams of a VR session. The feedback/tracking uplink here is an ideal
/// fixed-delay pipe, so tracking packets add no measurable load; the flag is
/// accepted for manifest compatibility and documented as a no-op. Audio, when
/// enabled, injects a fixed-size packet every 10 ms into the shared downlink
/// (consuming capacity and queue space) but is not part of the video trace
/// or the metrics feed.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrafficConfig {
    /// Transmitted frame rate, frames per second.
    pub fps: f64,
    pub size_model: FrameSizeModel,
    pub packet: PacketSizes,
    pub include_tracking_uplink: bool,
    pub include_audio: bool,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            fps: 90.0,
            size_model: FrameSizeModel::default(),
            packet: PacketSizes::default(),
            include_tracking_uplink: false,
            include_audio: false,
        }
    }
}

/// Audio companion stream: one packet per 10 ms.
pub const AUDIO_PERIOD_NANOS: i64 = 10_000_000;
/// Wire size of one audio packet.
pub const AUDIO_PACKET_BITS: u64 = 512 * 8;

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(TrafficError::BadFps);
        }
        let m = &self.size_model;
        if !(m.relative_jitter >= 0.0) || !m.relative_jitter.is_finite() {
            return Err(TrafficError::BadSizeModel);
        }
        if !(m.large_frame_factor > 0.0) || !m.large_frame_factor.is_finite() {
            return Err(TrafficError::BadSizeModel);
        }
        if self.packet.max_payload_bytes == 0 {
            return Err(TrafficError::BadPacketSizes);
        }
        Ok(())
    }

    /// Payload bits for frame `frame_index` (1-based) at the given target
    /// bitrate. Draws from `rng` only when `relative_jitter > 0`, so
    /// deterministic configurations consume no randomness.
    pub fn frame_payload_bits(
        &self,
        target_bitrate_bps: f64,
        frame_index: u64,
        rng: &mut ChaCha8Rng,
    ) -> u64 {
        let mut bits = target_bitrate_bps / self.fps;
        if self.size_model.relative_jitter > 0.0 {
            let scale = 1.0 + self.size_model.relative_jitter * standard_normal(rng);
            bits *= if scale < 0.05 { 0.05 } else { scale };
        }
        if self.size_model.large_frame_period > 0
            && frame_index % self.size_model.large_frame_period == 0
        {
            bits *= self.size_model.large_frame_factor;
        }
        let b = libm::round(bits) as u64;
        if b == 0 {
            1
        } else {
            b
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrafficError {
    BadFps,
    BadSizeModel,
    BadPacketSizes,
}

impl core::fmt::Display for TrafficError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let msg = match self {
            TrafficError::BadFps => "fps must be positive and finite",
            TrafficError::BadSizeModel => "size model parameters must be finite and positive",
            TrafficError::BadPacketSizes => "packet payload must be at least one byte",
        };
        f.write_str(msg)
    }
}

impl core::error::Error for TrafficError {}

/// Standard normal variate via the Box-Muller transform (two uniform draws).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.random::<f64>(); // (0, 1]: keeps the log finite
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}
