//! Ladder-stepping controller with delivery-rate and round-trip guards.
//!
//! Once per period the controller compares its windowed inputs against two
//! guards, in priority order:
//!
//! 1. if the frame-delivery ratio falls below `rho`, step down `n_dw` levels;
//! 2. else if the windowed round-trip exceeds `sigma_s`, step down `n_dw`
//!    levels with probability `gamma_rtt`;
//! 3. else step up `n_up` levels with probability `gamma_plus`.
//!
//! The outcome is then capped by a measured-capacity ceiling: the greatest
//! ladder level not above `max(m * capacity, b_min)`. By default the ceiling
//! only ever lowers the outcome (`clamp_as_upper_bound = true`); setting the
//! flag to `false` makes the ceiling replace the outcome outright, which can
//! also raise it after a hold.
//!
//! Probabilistic draws are taken lazily, only when the corresponding branch
//! is actually reached, so a fixed seed yields reproducible trajectories.

use super::ladder::BitrateLadder;
use super::{BitrateController, Branch, ControllerBuildError, DecisionRecord, FrameFeedback};
use crate::averaging::{Averager, AveragerConfig};
use crate::time::{ServerTime, TimeDelta};
use alloc::format;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step-rule convenience presets: how hard to back off relative to `n_up`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Profile {
    /// Symmetric: `n_dw = n_up`.
    Balanced,
    /// Backs off twice as fast as it climbs: `n_dw = 2 * n_up`.
    Speedy,
    /// Any down decision drops straight to the ladder floor: `n_dw = n_steps`.
    Anxious,
}

impl Profile {
    /// Down-step count implied by the profile rule.
    pub fn n_dw(self, n_up: u32, n_steps: u32) -> u32 {
        match self {
            Profile::Balanced => n_up,
            Profile::Speedy => 2 * n_up,
            Profile::Anxious => n_steps,
        }
    }
}

/// Full parameter set. `Default` carries the recommended operating point:
/// 10–100 Mbps ladder in 10 Mbps steps, 1 s period and windows, ceiling
/// multiplier 0.9, round-trip guard 22 ms firing with probability 1,
/// delivery-ratio guard 0.99, upward probe probability 0.25, single-step
/// moves.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NestVrConfig {
    /// Ladder floor, bits/s.
    pub b_min_bps: f64,
    /// Ladder ceiling, bits/s.
    pub b_max_bps: f64,
    /// Number of ladder steps (levels = steps + 1).
    pub n_steps: u32,
    /// Requested starting bitrate; snapped to the greatest level not above
    /// `max(b_init_bps, b_min_bps)`.
    pub b_init_bps: f64,
    /// Adjustment period, seconds.
    pub tau_s: f64,
    /// Capacity-ceiling multiplier, in (0, 1].
    pub m: f64,
    /// Delivery-ratio guard threshold, in [0, 1].
    pub rho: f64,
    /// Round-trip guard threshold, seconds.
    pub sigma_s: f64,
    /// Probability the round-trip guard, once exceeded, actually steps down.
    pub gamma_rtt: f64,
    /// Probability of probing upward when both guards are quiet.
    pub gamma_plus: f64,
    /// Levels per upward move, 1..=n_steps.
    pub n_up: u32,
    /// Levels per downward move, 1..=n_steps. Ignored when `profile` is set.
    pub n_dw: u32,
    /// Optional preset; when set, the effective `n_dw` is derived from it
    /// (see [`Profile::n_dw`]) and the explicit `n_dw` field is ignored.
    pub profile: Option<Profile>,
    /// Windowing applied to all four input feeds.
    pub averaging: AveragerConfig,
    /// Seed for the branch-probability draws.
    pub rng_seed: u64,
    /// `true`: ceiling caps the rule outcome. `false`: ceiling replaces it.
    pub clamp_as_upper_bound: bool,
}

impl Default for NestVrConfig {
    fn default() -> Self {
        NestVrConfig {
            b_min_bps: 10e6,
            b_max_bps: 100e6,
            n_steps: 9,
            b_init_bps: 100e6,
            tau_s: 1.0,
            m: 0.9,
            rho: 0.99,
            sigma_s: 0.022,
            gamma_rtt: 1.0,
            gamma_plus: 0.25,
            n_up: 1,
            n_dw: 1,
            profile: None,
            averaging: AveragerConfig::TimeWindow { window_s: 1.0 },
            rng_seed: 0,
            clamp_as_upper_bound: true,
        }
    }
}

impl NestVrConfig {
    /// Default parameters with the down-step count set by the profile rule.
    pub fn with_profile(profile: Profile) -> Self {
        NestVrConfig {
            profile: Some(profile),
            ..NestVrConfig::default()
        }
    }

    /// Down-step count actually in force: the profile rule when a profile is
    /// set, the explicit `n_dw` field otherwise.
    pub fn effective_n_dw(&self) -> u32 {
        match self.profile {
            Some(p) => p.n_dw(self.n_up, self.n_steps),
            None => self.n_dw,
        }
    }

    pub fn validate(&self) -> Result<(), ControllerBuildError> {
        if !(self.m > 0.0 && self.m <= 1.0) {
            return Err(ControllerBuildError::BadParameter(format!(
                "m = {} outside (0, 1]",
                self.m
            )));
        }
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(ControllerBuildError::BadParameter(format!(
                "rho = {} outside [0, 1]",
                self.rho
            )));
        }
        for (name, p) in [("gamma_rtt", self.gamma_rtt), ("gamma_plus", self.gamma_plus)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ControllerBuildError::BadParameter(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
        }
        for (name, n) in [("n_up", self.n_up), ("n_dw", self.effective_n_dw())] {
            if n < 1 || n > self.n_steps {
                return Err(ControllerBuildError::BadParameter(format!(
                    "{name} = {n} outside 1..=n_steps"
                )));
            }
        }
        if !(self.tau_s > 0.0) {
            return Err(ControllerBuildError::BadParameter(format!(
                "tau_s = {} must be positive",
                self.tau_s
            )));
        }
        if !(self.sigma_s >= 0.0) {
            return Err(ControllerBuildError::BadParameter(format!(
                "sigma_s = {} must be non-negative",
                self.sigma_s
            )));
        }
        if !(self.b_init_bps > 0.0) {
            return Err(ControllerBuildError::BadBitrate);
        }
        self.averaging.validate()?;
        BitrateLadder::new(self.b_min_bps, self.b_max_bps, self.n_steps)?;
        Ok(())
    }

    pub fn ladder(&self) -> Result<BitrateLadder, ControllerBuildError> {
        Ok(BitrateLadder::new(self.b_min_bps, self.b_max_bps, self.n_steps)?)
    }
}

/// Windowed inputs to one periodic step, `None` where the window held no
/// samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInputs {
    /// Current ladder index.
    pub index: usize,
    /// Send-gap average over receive-gap average; zero when frames departed
    /// but none arrived.
    pub nfr: Option<f64>,
    /// Windowed round-trip, seconds.
    pub vf_rtt_s: Option<f64>,
    /// Windowed capacity estimate, bits/s.
    pub capacity_bps: Option<f64>,
}

/// Result of one periodic step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    /// Ladder index after guards and ceiling.
    pub index: usize,
    /// Ladder index the guard rule alone chose, before the ceiling.
    pub rule_index: usize,
    pub branch: Branch,
    /// True when a guard input was undefined and the step held in place.
    pub inputs_missing: bool,
}

/// One periodic decision as a pure function of inputs.
///
/// `draw` supplies uniform [0, 1) variates and is invoked only when a
/// probabilistic branch is actually reached: never for the delivery-ratio
/// guard, once when the round-trip guard is consulted, once when the upward
/// probe is consulted. A probability fires when the draw falls strictly
/// below it.
///
/// Each input is demanded only where its guard is consulted. An undefined
/// `nfr` holds the current index untouched (no draws, no ceiling); a
/// delivery ratio below `rho` steps down without reading the round-trip at
/// all, so an undefined `vf_rtt_s` only forces a hold when the delivery
/// ratio was healthy. An undefined `capacity_bps` runs the guards but skips
/// the ceiling.
pub fn nestvr_step(
    cfg: &NestVrConfig,
    ladder: &BitrateLadder,
    inputs: StepInputs,
    draw: &mut dyn FnMut() -> f64,
) -> StepOutcome {
    let hold_missing = StepOutcome {
        index: inputs.index,
        rule_index: inputs.index,
        branch: Branch::Hold,
        inputs_missing: true,
    };
    let nfr = match inputs.nfr {
        Some(n) => n,
        None => return hold_missing,
    };

    let (rule_index, mut branch) = if nfr < cfg.rho {
        (ladder.down(inputs.index, cfg.effective_n_dw()), Branch::DownNfr)
    } else {
        let vf_rtt_s = match inputs.vf_rtt_s {
            Some(v) => v,
            None => return hold_missing,
        };
        if vf_rtt_s > cfg.sigma_s {
            if draw() < cfg.gamma_rtt {
                (ladder.down(inputs.index, cfg.effective_n_dw()), Branch::DownRtt)
            } else {
                (inputs.index, Branch::Hold)
            }
        } else if draw() < cfg.gamma_plus {
            (ladder.up(inputs.index, cfg.n_up), Branch::Up)
        } else {
            (inputs.index, Branch::Hold)
        }
    };

    let mut index = rule_index;
    if let Some(c) = inputs.capacity_bps {
        let target = cfg.m * c;
        let ceiling = ladder.floor_index(if target > ladder.min_bps() {
            target
        } else {
            ladder.min_bps()
        });
        if cfg.clamp_as_upper_bound {
            if ceiling < index {
                index = ceiling;
                branch = Branch::Clamped;
            }
        } else if ceiling != index {
            index = ceiling;
            branch = Branch::Clamped;
        }
    }

    StepOutcome {
        index,
        rule_index,
        branch,
        inputs_missing: false,
    }
}

/// Stateful controller wrapping [`nestvr_step`] with windowed input feeds
/// and a seeded draw stream.
pub struct NestVrController {
    cfg: NestVrConfig,
    ladder: BitrateLadder,
    index: usize,
    tx_gap: Averager,
    rx_gap: Averager,
    vf_rtt: Averager,
    peak: Averager,
    rng: ChaCha8Rng,
}

impl NestVrController {
    pub fn new(cfg: NestVrConfig) -> Result<Self, ControllerBuildError> {
        cfg.validate()?;
        let ladder = cfg.ladder()?;
        let init = if cfg.b_init_bps > ladder.min_bps() {
            cfg.b_init_bps
        } else {
            ladder.min_bps()
        };
        let index = ladder.floor_index(init);
        Ok(NestVrController {
            index,
            tx_gap: Averager::new(cfg.averaging)?,
            rx_gap: Averager::new(cfg.averaging)?,
            vf_rtt: Averager::new(cfg.averaging)?,
            peak: Averager::new(cfg.averaging)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            ladder,
            cfg,
        })
    }

    pub fn ladder(&self) -> &BitrateLadder {
        &self.ladder
    }

    /// Windowed capacity estimate as of `now`, bits/s.
    pub fn capacity_estimate(&mut self, now: ServerTime) -> Option<f64> {
        self.peak.evict_until(now);
        self.peak.value()
    }
}

impl BitrateController for NestVrController {
    fn target_bitrate_bps(&self) -> f64 {
        self.ladder.level(self.index)
    }

    fn period(&self) -> Option<TimeDelta> {
        Some(TimeDelta::from_secs_f64(self.cfg.tau_s))
    }

    fn on_frame_departure(&mut self, now: ServerTime, gap: Option<TimeDelta>) {
        if let Some(g) = gap {
            self.tx_gap.push(now, g.as_secs_f64());
        }
    }

    fn on_frame_feedback(&mut self, now: ServerTime, feedback: &FrameFeedback) {
        if let Some(gap) = feedback.interarrival {
            self.rx_gap.push(now, gap.as_secs_f64());
        }
        self.vf_rtt.push(now, feedback.vf_rtt.as_secs_f64());
        if let Some(peak) = feedback.peak_throughput_bps {
            self.peak.push(now, peak);
        }
    }

    fn adjust(&mut self, k: u64, now: ServerTime) -> DecisionRecord {
        self.tx_gap.evict_until(now);
        self.rx_gap.evict_until(now);
        self.vf_rtt.evict_until(now);
        self.peak.evict_until(now);

        // A window with departures but no completions means the link is
        // delivering nothing: report a zero ratio rather than an undefined
        // one, so a fully stalled link still trips the down-step instead of
        // freezing the controller at the rate that caused the stall.
        let nfr = match (self.tx_gap.value(), self.rx_gap.value()) {
            (Some(tx), Some(rx)) if rx > 0.0 => Some(tx / rx),
            (Some(_), None) => Some(0.0),
            _ => None,
        };
        let vf_rtt_s = self.vf_rtt.value();
        let capacity_bps = self.peak.value();

        let rng = &mut self.rng;
        let outcome = nestvr_step(
            &self.cfg,
            &self.ladder,
            StepInputs {
                index: self.index,
                nfr,
                vf_rtt_s,
                capacity_bps,
            },
            &mut || rng.random::<f64>(),
        );
        self.index = outcome.index;

        DecisionRecord {
            k,
            time: now,
            nfr,
            vf_rtt_s,
            capacity_bps,
            branch: outcome.branch,
            inputs_missing: outcome.inputs_missing,
            bitrate_bps: self.ladder.level(self.index),
        }
    }
}
