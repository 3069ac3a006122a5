//! Sliding-window and exponential averagers for controller inputs.
//!
//! An empty averager yields `None`; controllers interpret that as "no
//! information" and hold their previous output rather than inventing a zero.

use alloc::collections::VecDeque;

use crate::time::{ServerTime, TimeDelta};

/// Averaging mode. There is deliberately no default EWMA weight: a weight is
/// a tuning decision the caller must make explicitly.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "mode"))]
pub enum AveragerConfig {
    /// Arithmetic mean of the most recent `n` samples.
    CountWindow { n: usize },
    /// Arithmetic mean of samples whose age relative to the newest sample is
    /// strictly less than `window_s` seconds (the newest sample always
    /// qualifies).
    TimeWindow { window_s: f64 },
    /// Exponential moving average `avg <- weight * x + (1 - weight) * avg`,
    /// initialized to the first sample.
    Ewma { weight: f64 },
}

impl AveragerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            AveragerConfig::CountWindow { n } if n == 0 => Err(ConfigError::EmptyWindow),
            AveragerConfig::TimeWindow { window_s } if !(window_s > 0.0) => {
                Err(ConfigError::EmptyWindow)
            }
            AveragerConfig::Ewma { weight } if !(weight > 0.0 && weight <= 1.0) => {
                Err(ConfigError::BadWeight)
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigError {
    EmptyWindow,
    BadWeight,
}

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConfigError::EmptyWindow => write!(f, "averaging window must be non-empty"),
            ConfigError::BadWeight => write!(f, "EWMA weight must be in (0, 1]"),
        }
    }
}

impl core::error::Error for ConfigError {}

#[derive(Clone, Debug)]
enum State {
    Count {
        n: usize,
        samples: VecDeque<f64>,
    },
    Time {
        window: TimeDelta,
        samples: VecDeque<(ServerTime, f64)>,
    },
    Ewma {
        weight: f64,
        avg: Option<f64>,
    },
}

/// Runtime averager over timestamped scalar samples.
#[derive(Clone, Debug)]
pub struct Averager {
    state: State,
}

impl Averager {
    pub fn new(config: AveragerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let state = match config {
            AveragerConfig::CountWindow { n } => State::Count {
                n,
                samples: VecDeque::with_capacity(n),
            },
            AveragerConfig::TimeWindow { window_s } => State::Time {
                window: TimeDelta::from_secs_f64(window_s),
                samples: VecDeque::new(),
            },
            AveragerConfig::Ewma { weight } => State::Ewma { weight, avg: None },
        };
        Ok(Averager { state })
    }

    /// Feeds one sample. `at` must be non-decreasing across pushes; the
    /// time-window mode evicts samples whose age relative to `at` reaches the
    /// window length.
    pub fn push(&mut self, at: ServerTime, value: f64) {
        match &mut self.state {
            State::Count { n, samples } => {
                if samples.len() == *n {
                    samples.pop_front();
                }
                samples.push_back(value);
            }
            State::Time { window, samples } => {
                samples.push_back((at, value));
                while let Some(&(t, _)) = samples.front() {
                    if at - t >= *window {
                        samples.pop_front();
                    } else {
                        break;
                    }
                }
            }
            State::Ewma { weight, avg } => {
                *avg = Some(match *avg {
                    None => value,
                    Some(c) => *weight * value + (1.0 - *weight) * c,
                });
            }
        }
    }

    /// Current average, or `None` while no sample is retained.
    pub fn value(&self) -> Option<f64> {
        match &self.state {
            State::Count { samples, .. } => mean(samples.iter().copied()),
            State::Time { samples, .. } => mean(samples.iter().map(|&(_, v)| v)),
            State::Ewma { avg, .. } => *avg,
        }
    }

    /// Drops time-windowed samples that are out of window as of `now`, so a
    /// read at `now` reflects only the trailing window even when no sample
    /// arrived recently. No-op for count and EWMA modes, which are
    /// event-driven by design.
    pub fn evict_until(&mut self, now: ServerTime) {
        if let State::Time { window, samples } = &mut self.state {
            while let Some(&(t, _)) = samples.front() {
                if now - t >= *window {
                    samples.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.value().is_none()
    }

    pub fn reset(&mut self) {
        match &mut self.state {
            State::Count { samples, .. } => samples.clear(),
            State::Time { samples, .. } => samples.clear(),
            State::Ewma { avg, .. } => *avg = None,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0u64;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(sum / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(s: f64) -> ServerTime {
        ServerTime(TimeDelta::from_secs_f64(s).as_nanos())
    }

    #[test]
    fn count_window_keeps_last_n() {
        let mut a = Averager::new(AveragerConfig::CountWindow { n: 3 }).unwrap();
        assert_eq!(a.value(), None);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            a.push(at(i as f64), *v);
        }
        assert_eq!(a.value(), Some(3.0)); // mean of 2, 3, 4
    }

    #[test]
    fn time_window_eviction_is_strict_and_newest_inclusive() {
        let mut a = Averager::new(AveragerConfig::TimeWindow { window_s: 1.0 }).unwrap();
        a.push(at(0.0), 10.0);
        a.push(at(0.5), 20.0);
        a.push(at(1.2), 30.0);
        // The sample at t=0.0 has age 1.2 >= 1.0 and is gone; 0.5 and 1.2 stay.
        assert_eq!(a.value(), Some(25.0));

        // A sample exactly at the window edge is evicted (strict age < window).
        let mut b = Averager::new(AveragerConfig::TimeWindow { window_s: 1.0 }).unwrap();
        b.push(at(0.0), 10.0);
        b.push(at(1.0), 30.0);
        assert_eq!(b.value(), Some(30.0));
    }

    #[test]
    fn ewma_initializes_to_first_sample() {
        let mut a = Averager::new(AveragerConfig::Ewma { weight: 0.5 }).unwrap();
        a.push(at(0.0), 4.0);
        assert_eq!(a.value(), Some(4.0));
        a.push(at(1.0), 8.0);
        assert_eq!(a.value(), Some(6.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(Averager::new(AveragerConfig::CountWindow { n: 0 }).is_err());
        assert!(Averager::new(AveragerConfig::TimeWindow { window_s: 0.0 }).is_err());
        assert!(Averager::new(AveragerConfig::Ewma { weight: 0.0 }).is_err());
        assert!(Averager::new(AveragerConfig::Ewma { weight: 1.5 }).is_err());
        assert!(Averager::new(AveragerConfig::Ewma { weight: 1.0 }).is_ok());
    }

    #[test]
    fn evicting_at_read_time_empties_a_stale_time_window() {
        let mut a = Averager::new(AveragerConfig::TimeWindow { window_s: 1.0 }).unwrap();
        a.push(at(0.0), 10.0);
        a.push(at(0.4), 20.0);
        a.evict_until(at(1.3));
        assert_eq!(a.value(), Some(20.0)); // 0.0 aged out, 0.4 still inside
        a.evict_until(at(1.4));
        assert_eq!(a.value(), None); // edge-exact eviction, window now empty

        // Count windows are untouched by wall-clock staleness.
        let mut c = Averager::new(AveragerConfig::CountWindow { n: 2 }).unwrap();
        c.push(at(0.0), 5.0);
        c.evict_until(at(100.0));
        assert_eq!(c.value(), Some(5.0));
    }

    #[test]
    fn reset_empties_the_averager() {
        let mut a = Averager::new(AveragerConfig::CountWindow { n: 2 }).unwrap();
        a.push(at(0.0), 1.0);
        a.reset();
        assert!(a.is_empty());
    }

    #[test]
    fn gap_averages_compose_into_a_rate_ratio() {
        // Averaging inter-event gaps and inverting yields the harmonic rate:
        // receive gaps [11.1ms, 22.2ms] vs send gaps of 11.1ms give a
        // delivered/sent rate ratio of 11.1 / 16.65 = 2/3.
        let mut rx = Averager::new(AveragerConfig::CountWindow { n: 8 }).unwrap();
        let mut tx = Averager::new(AveragerConfig::CountWindow { n: 8 }).unwrap();
        for (i, g) in [0.0111, 0.0222].iter().enumerate() {
            rx.push(at(i as f64), *g);
        }
        for i in 0..2 {
            tx.push(at(i as f64), 0.0111);
        }
        let ratio = tx.value().unwrap() / rx.value().unwrap();
        assert!((ratio - 2.0 / 3.0).abs() < 1e-12);
    }
}
