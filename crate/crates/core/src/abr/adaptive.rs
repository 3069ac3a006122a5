//! Delay-budget controller: scales a per-frame capacity estimate.
//!
//! Every completed frame yields a capacity sample `payload_bits /
//! network_delay`. Once per period the controller takes `multiplier` times
//! the windowed average of those samples, then multiplies by
//! `min(1, threshold / observed)` for each latency feed (encoder, decoder,
//! network) whose windowed average exceeds its threshold, and finally clamps
//! into `[b_min_bps, b_max_bps]`.
//!
//! The decision record reports `Clamped` when a rail bound the result, and
//! `Hold` otherwise (this controller has no discrete branch structure; the
//! trajectory lives in `bitrate_bps`). The simulation feeds only the network
//! latency; the encoder and decoder feeds are exposed as methods for callers
//! that model those stages.
//!
//! A window in which frames kept departing but none completed reads as a
//! zero capacity estimate, so the offer drops to `b_min_bps` until delivery
//! resumes; only a window with no departures at all holds the previous
//! bitrate as "no information".

use super::{BitrateController, Branch, ControllerBuildError, DecisionRecord, FrameFeedback};
use crate::averaging::{Averager, AveragerConfig};
use crate::time::{ServerTime, TimeDelta};
use alloc::format;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AdaptiveConfig {
    /// Fraction of the capacity estimate to offer, in (0, 1].
    pub multiplier: f64,
    /// Encoder-latency budget, seconds. Default is 90% of a 90 fps frame
    /// interval.
    pub encoder_threshold_s: f64,
    /// Decoder-latency budget, seconds.
    pub decoder_threshold_s: f64,
    /// Network-delay budget, seconds.
    pub network_threshold_s: f64,
    pub b_min_bps: f64,
    pub b_max_bps: f64,
    /// Bitrate in force until the first defined estimate.
    pub b_init_bps: f64,
    /// Adjustment period, seconds.
    pub period_s: f64,
    /// Windowing for the capacity and latency feeds.
    pub averaging: AveragerConfig,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            multiplier: 0.9,
            encoder_threshold_s: 0.9 / 90.0,
            decoder_threshold_s: 0.030,
            network_threshold_s: 0.008,
            b_min_bps: 10e6,
            b_max_bps: 100e6,
            b_init_bps: 100e6,
            period_s: 1.0,
            averaging: AveragerConfig::TimeWindow { window_s: 1.0 },
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<(), ControllerBuildError> {
        if !(self.multiplier > 0.0 && self.multiplier <= 1.0) {
            return Err(ControllerBuildError::BadParameter(format!(
                "multiplier = {} outside (0, 1]",
                self.multiplier
            )));
        }
        for (name, t) in [
            ("encoder_threshold_s", self.encoder_threshold_s),
            ("decoder_threshold_s", self.decoder_threshold_s),
            ("network_threshold_s", self.network_threshold_s),
            ("period_s", self.period_s),
        ] {
            if !(t > 0.0) {
                return Err(ControllerBuildError::BadParameter(format!(
                    "{name} = {t} must be positive"
                )));
            }
        }
        if !(self.b_min_bps > 0.0 && self.b_max_bps > self.b_min_bps) {
            return Err(ControllerBuildError::BadBitrate);
        }
        if !(self.b_init_bps > 0.0) {
            return Err(ControllerBuildError::BadBitrate);
        }
        self.averaging.validate()?;
        Ok(())
    }
}

pub struct AdaptiveController {
    cfg: AdaptiveConfig,
    bitrate_bps: f64,
    capacity: Averager,
    encoder_latency: Averager,
    decoder_latency: Averager,
    network_latency: Averager,
    departures: Averager,
}

impl AdaptiveController {
    pub fn new(cfg: AdaptiveConfig) -> Result<Self, ControllerBuildError> {
        cfg.validate()?;
        let clamp = |v: f64| v.clamp(cfg.b_min_bps, cfg.b_max_bps);
        Ok(AdaptiveController {
            bitrate_bps: clamp(cfg.b_init_bps),
            capacity: Averager::new(cfg.averaging)?,
            encoder_latency: Averager::new(cfg.averaging)?,
            decoder_latency: Averager::new(cfg.averaging)?,
            network_latency: Averager::new(cfg.averaging)?,
            departures: Averager::new(cfg.averaging)?,
            cfg,
        })
    }

    /// Encoder-latency sample, seconds (not produced by the simulation).
    pub fn push_encoder_latency(&mut self, now: ServerTime, latency_s: f64) {
        self.encoder_latency.push(now, latency_s);
    }

    /// Decoder-latency sample, seconds (not produced by the simulation).
    pub fn push_decoder_latency(&mut self, now: ServerTime, latency_s: f64) {
        self.decoder_latency.push(now, latency_s);
    }
}

/// `min(1, threshold / observed)` for one latency feed, 1 when the feed is
/// empty or within budget.
fn budget_scale(avg: Option<f64>, threshold_s: f64) -> f64 {
    match avg {
        Some(observed) if observed > threshold_s => threshold_s / observed,
        _ => 1.0,
    }
}

impl BitrateController for AdaptiveController {
    fn target_bitrate_bps(&self) -> f64 {
        self.bitrate_bps
    }

    fn period(&self) -> Option<TimeDelta> {
        Some(TimeDelta::from_secs_f64(self.cfg.period_s))
    }

    fn on_frame_departure(&mut self, now: ServerTime, _gap: Option<TimeDelta>) {
        self.departures.push(now, 1.0);
    }

    fn on_frame_feedback(&mut self, now: ServerTime, feedback: &FrameFeedback) {
        let delay_s = feedback.network_delay.as_secs_f64();
        if delay_s > 0.0 {
            self.capacity.push(now, feedback.payload_bits as f64 / delay_s);
        }
        self.network_latency.push(now, delay_s);
    }

    fn adjust(&mut self, k: u64, now: ServerTime) -> DecisionRecord {
        self.capacity.evict_until(now);
        self.encoder_latency.evict_until(now);
        self.decoder_latency.evict_until(now);
        self.network_latency.evict_until(now);
        self.departures.evict_until(now);

        // Frames kept departing over the window yet none completed: the
        // link is delivering nothing, so the estimate reads zero (dropping
        // the offer to the floor) rather than undefined (which would freeze
        // the offer at the rate that caused the stall).
        let capacity_bps = match self.capacity.value() {
            None if self.departures.value().is_some() => Some(0.0),
            v => v,
        };
        let net_avg = self.network_latency.value();

        let (branch, inputs_missing) = match capacity_bps {
            None => (Branch::Hold, true),
            Some(c) => {
                let mut target = self.cfg.multiplier * c;
                target *= budget_scale(self.encoder_latency.value(), self.cfg.encoder_threshold_s);
                target *= budget_scale(self.decoder_latency.value(), self.cfg.decoder_threshold_s);
                target *= budget_scale(net_avg, self.cfg.network_threshold_s);
                let clamped = target.clamp(self.cfg.b_min_bps, self.cfg.b_max_bps);
                let rail_bound = clamped != target;
                self.bitrate_bps = clamped;
                (if rail_bound { Branch::Clamped } else { Branch::Hold }, false)
            }
        };

        DecisionRecord {
            k,
            time: now,
            nfr: None,
            vf_rtt_s: net_avg,
            capacity_bps,
            branch,
            inputs_missing,
            bitrate_bps: self.bitrate_bps,
        }
    }
}
