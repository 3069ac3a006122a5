//! Constant-bitrate controller: holds one target forever.

use super::{BitrateController, Branch, DecisionRecord, FrameFeedback};
use crate::time::{ServerTime, TimeDelta};

#[derive(Clone, Debug)]
pub struct CbrController {
    bitrate_bps: f64,
}

impl CbrController {
    pub fn new(bitrate_bps: f64) -> Self {
        CbrController { bitrate_bps }
    }
}

impl BitrateController for CbrController {
    fn target_bitrate_bps(&self) -> f64 {
        self.bitrate_bps
    }

    fn period(&self) -> Option<TimeDelta> {
        None
    }

    fn on_frame_departure(&mut self, _now: ServerTime, _gap: Option<TimeDelta>) {}

    fn on_frame_feedback(&mut self, _now: ServerTime, _feedback: &FrameFeedback) {}

    fn adjust(&mut self, k: u64, now: ServerTime) -> DecisionRecord {
        DecisionRecord {
            k,
            time: now,
            nfr: None,
            vf_rtt_s: None,
            capacity_bps: None,
            branch: Branch::Hold,
            inputs_missing: false,
            bitrate_bps: self.bitrate_bps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holds_its_bitrate() {
        let mut c = CbrController::new(50e6);
        assert_eq!(c.target_bitrate_bps(), 50e6);
        assert_eq!(c.period(), None);
        let d = c.adjust(1, ServerTime(1_000_000_000));
        assert_eq!(d.bitrate_bps, 50e6);
        assert_eq!(d.branch, Branch::Hold);
        assert!(!d.inputs_missing);
    }
}
