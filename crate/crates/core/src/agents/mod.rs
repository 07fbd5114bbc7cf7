//! Bidding policies: the linear bid primitive, PID and CEM controllers, the
//! fixed-ratio baseline, and the posterior-sampling Q-learning agent.
//!
//! Every policy picks one ratio `beta` per slot and bids `beta * u` on each
//! impression of that slot.

pub mod artifact;
pub mod cem;
pub mod pid;
pub mod qlearn;
pub mod qnet;
pub mod replay;

use serde::{Deserialize, Serialize};

use crate::env::{feasibility, Env, SlotObservation, SlotSummary, MAX_RATIO};
use crate::error::Result;
use crate::market::ProblemInstance;

pub use artifact::PolicyArtifact;
pub use cem::{CemBidder, CemConfig};
pub use pid::{pid_step, PidBidder, PidGains, PidState};
pub use qlearn::{evaluate, train, AgentConfig, BeliefMode, QPolicy, TrainOutput};

/// Bid for one impression: `beta * u`.
pub fn linear_bid(ratio: f64, utility: f64) -> f64 {
    ratio * utility
}

/// Feature normalizer used when the day's oracle value is zero.
pub fn feature_normalizer(oracle_value: f64) -> f64 {
    if oracle_value > 0.0 && oracle_value.is_finite() {
        oracle_value
    } else {
        1.0
    }
}

/// A slot-level bidding policy driven through [`rollout`].
pub trait Bidder {
    /// Called once before the first slot of a day.
    fn begin_day(&mut self, instance: &ProblemInstance);
    /// Ratio for the next slot.
    fn next_ratio(&mut self, obs: &SlotObservation) -> f64;
    /// Outcome of the slot just played.
    fn observe(&mut self, summary: &SlotSummary);
}

/// End-of-day result of one policy rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub delivery: f64,
    pub cost: f64,
    pub roi: Option<f64>,
    pub feasible: bool,
    pub terminated_early: bool,
    pub ratios: Vec<f64>,
}

/// Plays one day with `bidder`.
pub fn rollout(bidder: &mut dyn Bidder, instance: &ProblemInstance, oracle_value: f64) -> Result<DayOutcome> {
    let (mut env, mut obs) = Env::reset(instance, feature_normalizer(oracle_value))?;
    bidder.begin_day(instance);
    let mut ratios = Vec::with_capacity(instance.slots_per_day());
    while !env.is_done() {
        let ratio = bidder.next_ratio(&obs).clamp(0.0, MAX_RATIO);
        let step = env.step(ratio)?;
        bidder.observe(&step.summary);
        ratios.push(ratio);
        obs = step.observation;
    }
    Ok(outcome_of(&env, ratios))
}

pub(crate) fn outcome_of(env: &Env<'_>, ratios: Vec<f64>) -> DayOutcome {
    let l = env.ledger();
    let inst = env.instance();
    DayOutcome {
        delivery: l.cumulative_delivery,
        cost: l.cumulative_cost,
        roi: l.roi(),
        feasible: feasibility(l, inst.roi_limit, inst.budget).both,
        terminated_early: l.terminated_early,
        ratios,
    }
}

/// Bids the same ratio in every slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedRatioBidder {
    pub ratio: f64,
}

impl Bidder for FixedRatioBidder {
    fn begin_day(&mut self, _: &ProblemInstance) {}

    fn next_ratio(&mut self, _: &SlotObservation) -> f64 {
        self.ratio
    }

    fn observe(&mut self, _: &SlotSummary) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_day, run_auction, Impression, MarketConfig};

    #[test]
    fn linear_bid_examples() {
        assert_eq!(linear_bid(1.0, 2.5), 2.5);
        assert_eq!(linear_bid(0.0, 7.0), 0.0);
    }

    #[test]
    fn rescaling_utility_and_ratio_keeps_outcomes() {
        let day = generate_day(&MarketConfig::two_regime_default(), (1.0, f64::INFINITY), 4).unwrap();
        for c in [0.5, 2.0, 8.0] {
            for imp in day.slots.iter().flatten() {
                let (d, m) = imp.reveal();
                let scaled = Impression::new(imp.slot(), imp.utility() * c, d, m).unwrap();
                let a = run_auction(linear_bid(1.3, imp.utility()), imp);
                let b = run_auction(linear_bid(1.3 / c, scaled.utility()), &scaled);
                assert_eq!(a.revealed_price.is_some(), b.revealed_price.is_some());
            }
        }
    }

    #[test]
    fn fixed_rollout_matches_replay() {
        let day = generate_day(&MarketConfig::two_regime_default(), (1.0, f64::INFINITY), 9).unwrap();
        let out = rollout(&mut FixedRatioBidder { ratio: 0.8 }, &day, 10.0).unwrap();
        let (ledger, _) = crate::env::replay(&day, 10.0, &vec![0.8; 48]).unwrap();
        assert_eq!(out.delivery, ledger.cumulative_delivery);
        assert_eq!(out.cost, ledger.cumulative_cost);
        assert_eq!(out.ratios.len(), 48);
    }

    #[test]
    fn zero_oracle_value_still_runs() {
        let day = generate_day(&MarketConfig::two_regime_default(), (1.0, f64::INFINITY), 1).unwrap();
        let out = rollout(&mut FixedRatioBidder { ratio: 0.0 }, &day, 0.0).unwrap();
        assert_eq!((out.delivery, out.cost), (0.0, 0.0));
        assert!(out.feasible);
    }
}
