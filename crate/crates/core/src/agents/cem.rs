//! Per-day cross-entropy search over the bid ratio.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Bidder;
use crate::env::{SlotObservation, SlotSummary, MAX_RATIO};
use crate::market::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    /// Samples (slots) per refit.
    pub population: usize,
    pub elite_fraction: f64,
    pub initial_mean: f64,
    pub initial_std: f64,
    pub min_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 8,
            elite_fraction: 0.25,
            initial_mean: 1.0,
            initial_std: 1.0,
            min_std: 0.05,
        }
    }
}

/// Gaussian search state with the current population's `(ratio, score)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CemState {
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<(f64, f64)>,
}

impl CemState {
    pub fn new(config: &CemConfig) -> Self {
        Self {
            mean: config.initial_mean,
            std: config.initial_std.max(config.min_std),
            samples: Vec::with_capacity(config.population),
        }
    }

    /// Refits mean and std on the elite samples, then clears the population.
    /// If every sample scored the same there is no preference and the mean
    /// stays put.
    pub fn refit(&mut self, config: &CemConfig) {
        let mut s = std::mem::take(&mut self.samples);
        if s.is_empty() {
            return;
        }
        let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x.1), hi.max(x.1)));
        if lo == hi && config.elite_fraction < 1.0 {
            return;
        }
        s.sort_by(|a, b| b.1.total_cmp(&a.1));
        let k = ((config.elite_fraction * s.len() as f64).ceil() as usize).clamp(1, s.len());
        let elite = &s[..k];
        let mean = elite.iter().map(|x| x.0).sum::<f64>() / k as f64;
        let var = elite.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / k as f64;
        self.mean = mean;
        self.std = var.sqrt().max(config.min_std);
    }
}

/// One CEM slot decision: samples a ratio from the current Gaussian.
pub fn cem_step(state: &CemState, rng: &mut ChaCha8Rng) -> f64 {
    let n = Normal::new(state.mean, state.std).expect("std is floored above zero");
    n.sample(rng).clamp(0.0, MAX_RATIO)
}

#[derive(Debug, Clone)]
pub struct CemBidder {
    pub config: CemConfig,
    pub seed: u64,
    state: CemState,
    rng: ChaCha8Rng,
    roi_limit: f64,
    pending: f64,
    day: u64,
}

impl CemBidder {
    pub fn new(config: CemConfig, seed: u64) -> Self {
        Self {
            config,
            seed,
            state: CemState::new(&config),
            rng: ChaCha8Rng::seed_from_u64(seed),
            roi_limit: 1.0,
            pending: 0.0,
            day: 0,
        }
    }

    pub fn state(&self) -> &CemState {
        &self.state
    }
}

impl Bidder for CemBidder {
    fn begin_day(&mut self, instance: &ProblemInstance) {
        self.state = CemState::new(&self.config);
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.rng.set_stream(self.day);
        self.day += 1;
        self.roi_limit = instance.roi_limit;
    }

    fn next_ratio(&mut self, _: &SlotObservation) -> f64 {
        self.pending = cem_step(&self.state, &mut self.rng);
        self.pending
    }

    fn observe(&mut self, summary: &SlotSummary) {
        let score = summary.delivery - self.roi_limit * summary.cost;
        self.state.samples.push((self.pending, score));
        if self.state.samples.len() >= self.config.population {
            self.state.refit(&self.config);
        }
    }
}
