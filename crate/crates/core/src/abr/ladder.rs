//! Evenly spaced bitrate ladder.
//!
//! All controller outputs are ladder *elements*: levels are materialized once
//! and every selection returns `levels[i]`, never re-derived arithmetic, so
//! emitted bitrates compare exactly.

use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq)]
pub struct BitrateLadder {
    levels: Vec<f64>,
    step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderError {
    /// `min` must be strictly below `max` and both positive.
    BadRange,
    /// At least one step is required.
    NoSteps,
}

impl core::fmt::Display for LadderError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LadderError::BadRange => write!(f, "ladder needs 0 < min < max"),
            LadderError::NoSteps => write!(f, "ladder needs at least one step"),
        }
    }
}

impl core::error::Error for LadderError {}

impl BitrateLadder {
    /// Builds `n_steps + 1` levels `min + i * (max - min) / n_steps`.
    pub fn new(min_bps: f64, max_bps: f64, n_steps: u32) -> Result<Self, LadderError> {
        if !(min_bps > 0.0 && max_bps > min_bps) {
            return Err(LadderError::BadRange);
        }
        if n_steps == 0 {
            return Err(LadderError::NoSteps);
        }
        let step = (max_bps - min_bps) / f64::from(n_steps);
        let levels = (0..=n_steps)
            .map(|i| min_bps + f64::from(i) * step)
            .collect();
        Ok(BitrateLadder { levels, step })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn step_bps(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_bps(&self) -> f64 {
        self.levels[0]
    }

    pub fn max_bps(&self) -> f64 {
        *self.levels.last().expect("ladder is never empty")
    }

    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    pub fn top_index(&self) -> usize {
        self.levels.len() - 1
    }

    /// Index of the greatest level not above `max(target, min)`. Targets
    /// below the ladder floor land on the floor.
    pub fn floor_index(&self, target_bps: f64) -> usize {
        for i in (0..self.levels.len()).rev() {
            if self.levels[i] <= target_bps {
                return i;
            }
        }
        0
    }

    /// `floor_index`, resolved to the level value.
    pub fn floor_bps(&self, target_bps: f64) -> f64 {
        self.levels[self.floor_index(target_bps)]
    }

    pub fn down(&self, index: usize, steps: u32) -> usize {
        index.saturating_sub(steps as usize)
    }

    pub fn up(&self, index: usize, steps: u32) -> usize {
        (index + steps as usize).min(self.top_index())
    }
}
