//! Scalar Kalman filter used to smooth the per-frame one-way-delay gradient.
//!
//! The state is the filtered gradient itself (random-walk model). The
//! measurement noise is not known a priori, so it is adapted online as an
//! exponential moving average of squared innovations, floored to keep the
//! gain finite.

/// Filter tuning. Defaults favour responsiveness: the state-noise variance is
/// small but non-zero, so the filter keeps tracking persistent changes.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct KalmanConfig {
    /// Process (state) noise variance, in seconds^2 per update.
    pub state_noise_var: f64,
    /// Smoothing factor for the measurement-noise EMA (weight of the newest
    /// squared innovation).
    pub meas_var_smoothing: f64,
    /// Lower bound for the adapted measurement-noise variance, seconds^2.
    pub meas_var_floor: f64,
    /// Initial gradient estimate, seconds.
    pub init_estimate: f64,
    /// Initial estimate error variance, seconds^2.
    pub init_error_var: f64,
    /// Initial measurement-noise variance, seconds^2.
    pub init_meas_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            state_noise_var: 1e-7,
            meas_var_smoothing: 0.05,
            meas_var_floor: 1e-9,
            init_estimate: 0.0,
            init_error_var: 0.1,
            init_meas_var: 1e-3,
        }
    }
}

/// Running filter state.
#[derive(Clone, Debug)]
pub struct GradientFilter {
    cfg: KalmanConfig,
    estimate: f64,
    error_var: f64,
    meas_var: f64,
}

impl GradientFilter {
    pub fn new(cfg: KalmanConfig) -> Self {
        GradientFilter {
            estimate: cfg.init_estimate,
            error_var: cfg.init_error_var,
            meas_var: cfg.init_meas_var,
            cfg,
        }
    }

    /// Folds in one raw gradient observation (seconds) and returns the new
    /// filtered estimate.
    pub fn update(&mut self, raw: f64) -> f64 {
        let innovation = raw - self.estimate;
        let a = self.cfg.meas_var_smoothing;
        let adapted = a * innovation * innovation + (1.0 - a) * self.meas_var;
        self.meas_var = if adapted > self.cfg.meas_var_floor {
            adapted
        } else {
            self.cfg.meas_var_floor
        };
        let prior_var = self.error_var + self.cfg.state_noise_var;
        let gain = prior_var / (prior_var + self.meas_var);
        self.estimate += gain * innovation;
        self.error_var = (1.0 - gain) * prior_var;
        self.estimate
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }
}
