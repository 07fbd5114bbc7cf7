//! Multiplicative PID control of the bid ratio toward the ROI target.

use serde::{Deserialize, Serialize};

use super::Bidder;
use crate::env::{SlotObservation, SlotSummary, MAX_RATIO};
use crate::market::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup clamp on the accumulated error.
    pub integral_limit: f64,
    pub initial_ratio: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.4,
            ki: 0.05,
            kd: 0.1,
            integral_limit: 5.0,
            initial_ratio: 1.0,
        }
    }
}

impl PidGains {
    /// All three gains multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            kp: self.kp * s,
            ki: self.ki * s,
            kd: self.kd * s,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
}

/// One control step. `measured_roi` is `None` before anything was spent, which
/// counts as zero error.
pub fn pid_step(state: &mut PidState, gains: &PidGains, measured_roi: Option<f64>, target: f64, prev_ratio: f64) -> f64 {
    let e = measured_roi.map_or(0.0, |roi| roi - target);
    state.integral = (state.integral + e).clamp(-gains.integral_limit, gains.integral_limit);
    let de = e - state.prev_error;
    state.prev_error = e;
    let u = gains.kp * e + gains.ki * state.integral + gains.kd * de;
    (prev_ratio * u.exp()).clamp(0.0, MAX_RATIO)
}

#[derive(Debug, Clone)]
pub struct PidBidder {
    pub gains: PidGains,
    state: PidState,
    ratio: f64,
    target: f64,
    delivery: f64,
    cost: f64,
    started: bool,
}

impl PidBidder {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            state: PidState::default(),
            ratio: gains.initial_ratio,
            target: 1.0,
            delivery: 0.0,
            cost: 0.0,
            started: false,
        }
    }
}

impl Bidder for PidBidder {
    fn begin_day(&mut self, instance: &ProblemInstance) {
        *self = Self {
            target: instance.roi_limit,
            ..Self::new(self.gains)
        };
    }

    fn next_ratio(&mut self, _: &SlotObservation) -> f64 {
        if self.started {
            let roi = (self.cost > 0.0).then(|| self.delivery / self.cost);
            self.ratio = pid_step(&mut self.state, &self.gains, roi, self.target, self.ratio);
        }
        self.started = true;
        self.ratio
    }

    fn observe(&mut self, summary: &SlotSummary) {
        self.delivery += summary.delivery;
        self.cost += summary.cost;
    }
}
