//! Adaptive-bitrate controllers.
//!
//! A controller owns a target encoding bitrate and revises it on a fixed
//! period from per-frame feedback. The simulation drives a controller through
//! three entry points:
//!
//! - [`BitrateController::on_frame_departure`]: called when the sender emits
//!   a frame (carries the departure gap to the previous frame),
//! - [`BitrateController::on_frame_feedback`]: called when the client's
//!   per-frame report arrives back at the server,
//! - [`BitrateController::adjust`]: called once per period; returns a
//!   [`DecisionRecord`] describing what the controller saw and chose.
//!
//! All times on this interface are server-clock.

mod adaptive;
mod cbr;
mod ladder;
mod nestvr;

pub use adaptive::{AdaptiveConfig, AdaptiveController};
pub use cbr::CbrController;
pub use ladder::{BitrateLadder, LadderError};
pub use nestvr::{
    nestvr_step, NestVrConfig, NestVrController, Profile, StepInputs, StepOutcome,
};

use crate::averaging::ConfigError;
use crate::time::{ServerTime, TimeDelta};
use alloc::boxed::Box;
use alloc::string::String;

/// Which rule produced a periodic decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Branch {
    /// Delivery-rate guard fired: frames are arriving slower than they are
    /// sent.
    DownNfr,
    /// Round-trip guard fired (probabilistically).
    DownRtt,
    /// No guard fired and the probabilistic probe declined to raise.
    Hold,
    /// Probabilistic upward probe fired.
    Up,
    /// The rule outcome was overridden by the measured-capacity ceiling.
    Clamped,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::DownNfr => "down_nfr",
            Branch::DownRtt => "down_rtt",
            Branch::Hold => "hold",
            Branch::Up => "up",
            Branch::Clamped => "clamped",
        }
    }
}

/// One periodic controller decision, with the inputs it was based on.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecisionRecord {
    /// 1-based decision counter within the session.
    pub k: u64,
    /// Server time the decision was taken.
    pub time: ServerTime,
    /// Windowed frame-delivery ratio the decision saw (send gap over receive
    /// gap), if defined.
    pub nfr: Option<f64>,
    /// Windowed round-trip the decision saw, seconds, if defined.
    pub vf_rtt_s: Option<f64>,
    /// Windowed capacity estimate the decision saw, bits/s, if defined.
    pub capacity_bps: Option<f64>,
    /// Which rule produced the outcome.
    pub branch: Branch,
    /// True when one or more inputs were undefined and the controller held.
    pub inputs_missing: bool,
    /// Target bitrate in force after this decision, bits/s.
    pub bitrate_bps: f64,
}

/// Per-frame measurements reported back to the sender, as consumed by
/// controllers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameFeedback {
    pub frame_index: u64,
    /// Gap between this frame's completion and the previous completed
    /// frame's, if there was a previous completed frame.
    pub interarrival: Option<TimeDelta>,
    /// Departure of the frame's first packet to arrival of the frame's
    /// report, measured at the server.
    pub vf_rtt: TimeDelta,
    /// Frame payload size over its reception span, bits/s, if the span was
    /// nonzero.
    pub peak_throughput_bps: Option<f64>,
    /// Video payload bits in the frame.
    pub payload_bits: u64,
    /// Departure of the frame's first packet to arrival of the frame's
    /// report, as used by the delay-budget controller. Same quantity as
    /// `vf_rtt`; kept separate so the two controllers' inputs can diverge in
    /// experiments.
    pub network_delay: TimeDelta,
}

/// A bitrate controller driven by the session loop.
pub trait BitrateController {
    /// Target encoding bitrate currently in force, bits/s.
    fn target_bitrate_bps(&self) -> f64;

    /// Interval between periodic adjustments. `None` means the controller
    /// never adjusts (constant bitrate).
    fn period(&self) -> Option<TimeDelta>;

    /// Sender-side notification that a frame departed. `gap` is the departure
    /// spacing to the previous frame, absent for the first frame.
    fn on_frame_departure(&mut self, now: ServerTime, gap: Option<TimeDelta>);

    /// Per-frame report arrived back at the server.
    fn on_frame_feedback(&mut self, now: ServerTime, feedback: &FrameFeedback);

    /// Periodic adjustment. `k` is the 1-based decision counter.
    fn adjust(&mut self, k: u64, now: ServerTime) -> DecisionRecord;
}

/// Controller selection as read from scenario files.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum ControllerConfig {
    /// Fixed target; never adjusts.
    Cbr { bitrate_bps: f64 },
    /// Ladder-stepping controller with delivery-rate and round-trip guards.
    NestVr(NestVrConfig),
    /// Delay-budget controller scaling a capacity estimate.
    Adaptive(AdaptiveConfig),
}

impl ControllerConfig {
    /// Validates and instantiates the controller.
    pub fn build(&self) -> Result<Box<dyn BitrateController>, ControllerBuildError> {
        match self {
            ControllerConfig::Cbr { bitrate_bps } => {
                if !(*bitrate_bps > 0.0) {
                    return Err(ControllerBuildError::BadBitrate);
                }
                Ok(Box::new(CbrController::new(*bitrate_bps)))
            }
            ControllerConfig::NestVr(cfg) => Ok(Box::new(NestVrController::new(cfg.clone())?)),
            ControllerConfig::Adaptive(cfg) => Ok(Box::new(AdaptiveController::new(cfg.clone())?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControllerBuildError {
    BadBitrate,
    Ladder(LadderError),
    Averaging(ConfigError),
    /// A probability or scale parameter was outside its legal range.
    BadParameter(String),
}

impl From<LadderError> for ControllerBuildError {
    fn from(e: LadderError) -> Self {
        ControllerBuildError::Ladder(e)
    }
}

impl From<ConfigError> for ControllerBuildError {
    fn from(e: ConfigError) -> Self {
        ControllerBuildError::Averaging(e)
    }
}

impl core::fmt::Display for ControllerBuildError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ControllerBuildError::BadBitrate => write!(f, "bitrate must be positive"),
            ControllerBuildError::Ladder(e) => write!(f, "ladder: {e}"),
            ControllerBuildError::Averaging(e) => write!(f, "averaging: {e}"),
            ControllerBuildError::BadParameter(s) => write!(f, "bad parameter: {s}"),
        }
    }
}

impl core::error::Error for ControllerBuildError {}
