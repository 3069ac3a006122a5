//! Deterministic model of VR frame streaming over an impaired downlink.
//!
//! The crate is organized as a pipeline. [`sim`] runs a virtual-time event
//! loop in which a traffic source emits fixed-cadence video frames, each
//! fragmented into packets ([`packet`]) and offered to an emulated link
//! ([`link`]) with capacity phases, random loss, queueing, jitter and
//! duplication. Arrivals feed a receiver-side metrics engine ([`metrics`])
//! that reconstructs frames and derives per-frame network measurements;
//! those flow back over an ideal uplink to a bitrate controller ([`abr`])
//! that retargets the source once per period. Everything is seeded and
//! replayable: identical inputs produce identical logs, bit for bit.
//!
//! Clock discipline: the sender and receiver run on different clocks
//! ([`time`]), related by a ground-truth offset that only the simulation
//! bookkeeping may use. Measurement code differences same-clock timestamps
//! exclusively, so every metric is invariant to the offset.
//!
//! The crate is `no_std` (with `alloc`) so the model can be embedded or
//! fuzzed anywhere; IO, file formats and the command-line front end live in
//! the companion `nestsim-cli` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod abr;
pub mod averaging;
pub mod frame;
pub mod link;
pub mod metrics;
pub mod packet;
pub mod sim;
pub mod time;

pub use abr::{
    BitrateController, BitrateLadder, Branch, ControllerConfig, DecisionRecord, Profile,
};
pub use averaging::{Averager, AveragerConfig};
pub use frame::{FrameStatus, StatsFeedback};
pub use link::{DropLedger, DropReason, LinkScenario, PhaseSpec};
pub use metrics::{MetricName, MetricSample, MetricsConfig, MetricsEngine};
pub use packet::{PacketRecord, PacketSizes};
pub use sim::{
    run, run_session, summarize_interval, IntervalSummary, PacketEventRow, RunConfig,
    SessionResult, SessionSpec, TrafficConfig,
};
pub use time::{ClientTime, ServerTime, TimeDelta};
