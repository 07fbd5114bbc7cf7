//! Slot-stepped episode engine.
//!
//! One episode is one day. At each slot the bidder picks a ratio `beta`; every
//! impression in the slot receives the bid `beta * u`. The engine keeps the
//! cumulative ledger, enforces the budget, and emits an aggregate observation
//! that never contains the price of a lost auction.

use serde::{Deserialize, Serialize};

use crate::belief::SlotEvidence;
use crate::error::{Error, Result};
use crate::market::{run_auction, ProblemInstance};

/// Largest admissible bid ratio.
pub const MAX_RATIO: f64 = 4.0;

/// Number of observation features.
pub const OBS_DIM: usize = 7;

/// `(low, high)` clip range of each observation feature, in field order.
pub const CLIP_RANGES: [(f64, f64); OBS_DIM] = [
    (0.0, 1.0),
    (0.0, MAX_RATIO),
    (-3.0, 3.0),
    (0.0, 1.5),
    (-3.0, 3.0),
    (0.0, 5.0),
    (-3.0, 3.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLedger {
    pub cumulative_delivery: f64,
    pub cumulative_cost: f64,
    pub slot_delivery: Vec<f64>,
    pub slot_cost: Vec<f64>,
    pub wins: usize,
    pub terminated_early: bool,
    pub current_slot: usize,
}

impl EpisodeLedger {
    pub fn new(slots: usize) -> Self {
        Self {
            cumulative_delivery: 0.0,
            cumulative_cost: 0.0,
            slot_delivery: vec![0.0; slots],
            slot_cost: vec![0.0; slots],
            wins: 0,
            terminated_early: false,
            current_slot: 0,
        }
    }

    /// `D / C`, or `None` before anything was spent.
    pub fn roi(&self) -> Option<f64> {
        (self.cumulative_cost > 0.0).then(|| self.cumulative_delivery / self.cumulative_cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feasibility {
    pub roi_ok: bool,
    pub budget_ok: bool,
    pub both: bool,
}

/// Feasibility of cumulative `(D, C)`. Spending nothing never violates ROI.
pub fn feasibility_of(delivery: f64, cost: f64, roi_limit: f64, budget: f64) -> Feasibility {
    let roi_ok = cost == 0.0 || delivery / cost >= roi_limit;
    let budget_ok = cost <= budget;
    Feasibility {
        roi_ok,
        budget_ok,
        both: roi_ok && budget_ok,
    }
}

pub fn feasibility(ledger: &EpisodeLedger, roi_limit: f64, budget: f64) -> Feasibility {
    feasibility_of(ledger.cumulative_delivery, ledger.cumulative_cost, roi_limit, budget)
}

/// Aggregate statistics the bidder sees before choosing the next ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotObservation {
    pub time_progress: f64,
    pub prev_ratio: f64,
    pub roi_gap: f64,
    pub budget_rate: f64,
    pub slot_roi_gap: f64,
    pub slot_delivery_norm: f64,
    pub surplus_norm: f64,
}

impl SlotObservation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.time_progress,
            self.prev_ratio,
            self.roi_gap,
            self.budget_rate,
            self.slot_roi_gap,
            self.slot_delivery_norm,
            self.surplus_norm,
        ]
    }

    fn from_raw(raw: [f64; OBS_DIM]) -> Self {
        let c: Vec<f64> = raw
            .iter()
            .zip(CLIP_RANGES)
            .map(|(x, (lo, hi))| if x.is_nan() { 0.0 } else { x.clamp(lo, hi) })
            .collect();
        Self {
            time_progress: c[0],
            prev_ratio: c[1],
            roi_gap: c[2],
            budget_rate: c[3],
            slot_roi_gap: c[4],
            slot_delivery_norm: c[5],
            surplus_norm: c[6],
        }
    }
}

/// Observation for deciding slot `t`, given the ledger of slots `0..t`.
pub fn build_observation(
    ledger: &EpisodeLedger,
    t: usize,
    prev_ratio: f64,
    roi_limit: f64,
    budget: f64,
    oracle_value: f64,
) -> SlotObservation {
    let slots = ledger.slot_delivery.len().max(1) as f64;
    let d = ledger.cumulative_delivery;
    let c = ledger.cumulative_cost;
    let roi_gap = if c > 0.0 { d / c - roi_limit } else { 0.0 };
    let budget_rate = if budget.is_finite() && budget > 0.0 { c / budget } else { 0.0 };
    let (prev_d, prev_c) = match t.checked_sub(1) {
        Some(p) if p < ledger.slot_delivery.len() => (ledger.slot_delivery[p], ledger.slot_cost[p]),
        _ => (0.0, 0.0),
    };
    let slot_roi_gap = if prev_c > 0.0 { prev_d / prev_c - roi_limit } else { 0.0 };
    SlotObservation::from_raw([
        t as f64 / slots,
        prev_ratio,
        roi_gap,
        budget_rate,
        slot_roi_gap,
        slots * prev_d / oracle_value,
        (d - roi_limit * c) / oracle_value,
    ])
}

/// What one slot produced. The evidence part carries revealed prices of wins
/// and only the bids (never the prices) of losses.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSummary {
    pub slot: usize,
    pub ratio: f64,
    pub delivery: f64,
    pub cost: f64,
    pub wins: usize,
    pub evidence: SlotEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    /// The day ends once the remaining budget falls below this fraction of `B`.
    pub budget_exhaustion_frac: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            budget_exhaustion_frac: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Env<'a> {
    instance: &'a ProblemInstance,
    oracle_value: f64,
    options: EnvOptions,
    ledger: EpisodeLedger,
    prev_ratio: f64,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: SlotObservation,
    pub summary: SlotSummary,
    pub done: bool,
}

impl<'a> Env<'a> {
    pub fn reset(instance: &'a ProblemInstance, oracle_value: f64) -> Result<(Self, SlotObservation)> {
        Self::reset_with(instance, oracle_value, EnvOptions::default())
    }

    pub fn reset_with(
        instance: &'a ProblemInstance,
        oracle_value: f64,
        options: EnvOptions,
    ) -> Result<(Self, SlotObservation)> {
        if !(oracle_value > 0.0 && oracle_value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "normalizing oracle value must be positive, got {oracle_value}"
            )));
        }
        let env = Env {
            instance,
            oracle_value,
            options,
            ledger: EpisodeLedger::new(instance.slots_per_day()),
            prev_ratio: 1.0,
            done: instance.slots_per_day() == 0,
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn ledger(&self) -> &EpisodeLedger {
        &self.ledger
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.instance
    }

    pub fn oracle_value(&self) -> f64 {
        self.oracle_value
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> SlotObservation {
        build_observation(
            &self.ledger,
            self.ledger.current_slot,
            self.prev_ratio,
            self.instance.roi_limit,
            self.instance.budget,
            self.oracle_value,
        )
    }

    pub fn step(&mut self, ratio: f64) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if !(0.0..=MAX_RATIO).contains(&ratio) {
            return Err(Error::InvalidArgument(format!("bid ratio {ratio} outside [0, {MAX_RATIO}]")));
        }
        let t = self.ledger.current_slot;
        let budget = self.instance.budget;
        let mut summary = SlotSummary {
            slot: t,
            ratio,
            delivery: 0.0,
            cost: 0.0,
            wins: 0,
            evidence: SlotEvidence::new(ratio),
        };
        for imp in &self.instance.slots[t] {
            let bid = ratio * imp.utility();
            if bid <= 0.0 {
                continue;
            }
            // cost <= bid, so skipping unaffordable bids keeps C <= B.
            if self.ledger.cumulative_cost + summary.cost + bid > budget {
                continue;
            }
            let out = run_auction(bid, imp);
            match out.revealed_price {
                Some(price) => {
                    summary.delivery += out.delivery;
                    summary.cost += out.cost;
                    summary.wins += 1;
                    summary.evidence.push_win(imp.utility(), price);
                }
                None => summary.evidence.push_loss(imp.utility(), bid),
            }
        }
        let ledger = &mut self.ledger;
        ledger.slot_delivery[t] = summary.delivery;
        ledger.slot_cost[t] = summary.cost;
        ledger.cumulative_delivery += summary.delivery;
        ledger.cumulative_cost += summary.cost;
        ledger.wins += summary.wins;
        ledger.current_slot += 1;
        if budget.is_finite() && budget - ledger.cumulative_cost < self.options.budget_exhaustion_frac * budget {
            ledger.terminated_early = ledger.current_slot < ledger.slot_delivery.len();
            self.done = true;
        }
        if ledger.current_slot == ledger.slot_delivery.len() {
            self.done = true;
        }
        self.prev_ratio = ratio;
        Ok(StepResult {
            observation: self.observation(),
            summary,
            done: self.done,
        })
    }
}

/// One line of an episode trace dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub beta: f64,
    #[serde(rename = "slot_D")]
    pub slot_delivery: f64,
    #[serde(rename = "slot_C")]
    pub slot_cost: f64,
    #[serde(rename = "D")]
    pub delivery: f64,
    #[serde(rename = "C")]
    pub cost: f64,
}

/// Replays a fixed ratio sequence; returns the final ledger and the trace.
/// Stops early if the episode terminates before the sequence is exhausted.
pub fn replay(
    instance: &ProblemInstance,
    oracle_value: f64,
    ratios: &[f64],
) -> Result<(EpisodeLedger, Vec<TraceRecord>)> {
    let (mut env, _) = Env::reset(instance, oracle_value)?;
    let mut trace = Vec::with_capacity(ratios.len());
    for &beta in ratios {
        if env.is_done() {
            break;
        }
        let step = env.step(beta)?;
        let l = env.ledger();
        trace.push(TraceRecord {
            t: step.summary.slot,
            beta,
            slot_delivery: step.summary.delivery,
            slot_cost: step.summary.cost,
            delivery: l.cumulative_delivery,
            cost: l.cumulative_cost,
        });
    }
    Ok((env.ledger.clone(), trace))
}
