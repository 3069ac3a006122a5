//! Packet-level and frame-level jitter trackers.

use alloc::collections::VecDeque;

use crate::time::{ClientTime, ServerTime};

/// RTP-style interarrival jitter: for consecutive received packets, the
/// transit-time difference `D = (arrival_n - arrival_{n-1}) -
/// (departure_n - departure_{n-1})` feeds `J <- J + (|D| - J) / 16`.
///
/// Both differences are taken within a single clock domain, so a constant
/// receiver clock offset cancels exactly. Every received packet updates the
/// tracker, duplicates included — jitter is a property of the arrival
/// process, not of the deduplicated stream.
#[derive(Clone, Debug, Default)]
pub struct PacketJitter {
    value: f64,
    last: Option<(ClientTime, ServerTime)>,
}

impl PacketJitter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_packet(&mut self, arrival: ClientTime, departure: ServerTime) {
        if let Some((prev_arrival, prev_departure)) = self.last {
            let d = (arrival - prev_arrival).as_secs_f64()
                - (departure - prev_departure).as_secs_f64();
            self.value += (libm::fabs(d) - self.value) / 16.0;
        }
        self.last = Some((arrival, departure));
    }

    /// Current jitter estimate in seconds (0 until two packets were seen).
    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Sample standard deviation over a sliding window of the most recent frame
/// inter-arrival gaps.
#[derive(Clone, Debug)]
pub struct FrameJitterWindow {
    window: usize,
    samples: VecDeque<f64>,
}

impl FrameJitterWindow {
    pub fn new(window: usize) -> Self {
        assert!(window >= 2, "a spread needs at least two samples");
        FrameJitterWindow {
            window,
            samples: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, gap_s: f64) {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(gap_s);
    }

    /// Sample standard deviation (divisor `len - 1`) of the retained gaps, or
    /// `None` until two gaps are available.
    pub fn value(&self) -> Option<f64> {
        let n = self.samples.len();
        if n < 2 {
            return None;
        }
        let mean = self.samples.iter().sum::<f64>() / n as f64;
        let var = self
            .samples
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        Some(libm::sqrt(var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::TimeDelta;

    fn ct(ms: f64) -> ClientTime {
        ClientTime(TimeDelta::from_secs_f64(ms / 1e3).as_nanos())
    }

    fn st(ms: f64) -> ServerTime {
        ServerTime(TimeDelta::from_secs_f64(ms / 1e3).as_nanos())
    }

    #[test]
    fn first_transit_difference_contributes_one_sixteenth() {
        let mut j = PacketJitter::new();
        j.on_packet(ct(0.0), st(0.0));
        // Departures 10ms apart, arrivals 12ms apart: |D| = 2ms.
        j.on_packet(ct(12.0), st(10.0));
        assert!((j.value() - 0.002 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn converges_geometrically_to_constant_transit_spread() {
        let d = 2e-3;
        let mut j = PacketJitter::new();
        // Departures every 10ms; arrivals alternate 10+2ms / 10-2ms gaps, so
        // |D| = 2ms on every update.
        let mut arr = 0.0;
        j.on_packet(ct(arr), st(0.0));
        for n in 1..=200 {
            arr += if n % 2 == 1 { 12.0 } else { 8.0 };
            j.on_packet(ct(arr), st(n as f64 * 10.0));
        }
        assert!(
            (j.value() - d).abs() <= 0.01 * d,
            "jitter {} should be within 1% of {}",
            j.value(),
            d
        );
    }

    #[test]
    fn constant_offset_between_clocks_cancels() {
        let run = |offset_ms: f64| {
            let mut j = PacketJitter::new();
            let mut arr = offset_ms;
            j.on_packet(ct(arr), st(0.0));
            for n in 1..=50 {
                arr += if n % 3 == 0 { 13.0 } else { 9.5 };
                j.on_packet(ct(arr), st(n as f64 * 10.0));
            }
            j.value()
        };
        assert_eq!(run(0.0).to_bits(), run(5000.0).to_bits());
    }

    #[test]
    fn frame_jitter_is_the_sample_std_of_the_window() {
        let mut w = FrameJitterWindow::new(16);
        assert_eq!(w.value(), None);
        w.push(0.010);
        assert_eq!(w.value(), None);
        w.push(0.012);
        // Sample std of {10ms, 12ms} = sqrt(2) ms.
        let v = w.value().unwrap();
        assert!((v - 2f64.sqrt() * 1e-3).abs() < 1e-15);
    }

    #[test]
    fn frame_jitter_window_slides() {
        let mut w = FrameJitterWindow::new(2);
        w.push(1.0);
        w.push(1.0);
        assert_eq!(w.value(), Some(0.0));
        w.push(3.0);
        // Window is now {1.0, 3.0}: std = sqrt(2).
        assert!((w.value().unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
