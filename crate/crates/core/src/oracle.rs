//! Hindsight solvers.
//!
//! With one ratio per slot chosen from a discrete grid, the best plan for a
//! known day is a multiple-choice knapsack: each slot contributes exactly one
//! item `(value, weight) = (delivery, cost)` and the plan must satisfy
//! `sum(weight) <= B` and `sum(value) - L * sum(weight) >= 0`.
//!
//! [`solve_slotwise_oracle`] solves it by dynamic programming over discretized
//! cumulative weight, keeping for each weight bucket the plan with the largest
//! surplus `value - L * weight`. Plans are re-evaluated exactly before being
//! returned. [`brute_force_oracle`] enumerates every plan and serves as the
//! reference on small instances.

use serde::{Deserialize, Serialize};

use crate::env::{feasibility_of, replay, MAX_RATIO};
use crate::error::{Error, Result};
use crate::harness::metrics::day_score;
use crate::market::ProblemInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioGrid {
    values: Vec<f64>,
}

impl RatioGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let ok = values.first() == Some(&0.0)
            && values.windows(2).all(|w| w[0] < w[1])
            && values.last().is_some_and(|v| *v <= MAX_RATIO);
        if !ok {
            return Err(Error::InvalidArgument(
                "ratio grid must be strictly increasing from 0 to at most 4".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `0, step, 2*step, ...` up to 4.
    pub fn uniform(step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {step}")));
        }
        let n = (MAX_RATIO / step + 1e-9).floor() as usize;
        let top = step * n as f64;
        Self::new((0..=n).map(|i| top * i as f64 / n.max(1) as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for RatioGrid {
    /// 41 ratios, step 0.1 on `[0, 4]`.
    fn default() -> Self {
        Self::uniform(0.1).expect("valid default grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotItem {
    pub slot: usize,
    pub ratio: f64,
    pub value: f64,
    pub weight: f64,
}

/// Delivery and cost of every `(slot, ratio)` pair, without budget pacing.
pub fn enumerate_items(instance: &ProblemInstance, grid: &RatioGrid) -> Vec<Vec<SlotItem>> {
    instance
        .slots
        .iter()
        .enumerate()
        .map(|(t, imps)| {
            grid.values
                .iter()
                .map(|&ratio| {
                    let (mut value, mut weight) = (0.0, 0.0);
                    for imp in imps {
                        let (d, m) = imp.reveal();
                        if ratio * imp.utility() > m {
                            value += d;
                            weight += m;
                        }
                    }
                    SlotItem {
                        slot: t,
                        ratio,
                        value,
                        weight,
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub ratios: Vec<f64>,
    pub indices: Vec<usize>,
    pub delivery: f64,
    pub cost: f64,
}

impl OraclePlan {
    fn evaluate(items: &[Vec<SlotItem>], indices: Vec<usize>) -> Self {
        let (mut delivery, mut cost) = (0.0, 0.0);
        let mut ratios = Vec::with_capacity(indices.len());
        for (t, &j) in indices.iter().enumerate() {
            delivery += items[t][j].value;
            cost += items[t][j].weight;
            ratios.push(items[t][j].ratio);
        }
        Self {
            ratios,
            indices,
            delivery,
            cost,
        }
    }
}

fn default_resolution() -> f64 {
    1e4
}

fn default_unbounded_resolution() -> f64 {
    4e3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Weight buckets per unit of budget: `eps_w = B / resolution`.
    #[serde(default = "default_resolution")]
    pub budget_resolution: f64,
    /// Bucket count over the feasible spend range when `B` is infinite.
    #[serde(default = "default_unbounded_resolution")]
    pub unbounded_resolution: f64,
    /// Explicit bucket width, overriding both resolutions.
    #[serde(default)]
    pub weight_step: Option<f64>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            budget_resolution: default_resolution(),
            unbounded_resolution: default_unbounded_resolution(),
            weight_step: None,
        }
    }
}

pub fn solve_slotwise_oracle(instance: &ProblemInstance, grid: &RatioGrid) -> OraclePlan {
    solve_slotwise_oracle_with(instance, grid, &OracleOptions::default())
}

pub fn solve_slotwise_oracle_with(instance: &ProblemInstance, grid: &RatioGrid, opts: &OracleOptions) -> OraclePlan {
    let items = enumerate_items(instance, grid);
    solve_items(&items, instance.roi_limit, instance.budget, opts)
}

/// Knapsack DP over pre-enumerated items.
pub fn solve_items(items: &[Vec<SlotItem>], roi_limit: f64, budget: f64, opts: &OracleOptions) -> OraclePlan {
    let slots = items.len();
    let zero_plan = || {
        let idx = items
            .iter()
            .map(|g| g.iter().position(|it| it.weight == 0.0 && it.value == 0.0).unwrap_or(0))
            .collect();
        OraclePlan::evaluate(items, idx)
    };
    if slots == 0 {
        return zero_plan();
    }
    // A feasible plan never spends more than its delivery allows.
    let max_value: f64 = items
        .iter()
        .map(|g| g.iter().map(|it| it.value).fold(0.0, f64::max))
        .sum();
    let cap = (max_value / roi_limit).min(budget);
    if !(cap > 0.0) {
        return zero_plan();
    }
    let step = match opts.weight_step {
        Some(s) => s,
        None if budget.is_finite() => budget / opts.budget_resolution,
        None => cap / opts.unbounded_resolution,
    };
    let buckets = (cap / step + 1e-9).floor() as usize + 1;

    let qweights: Vec<Vec<usize>> = items
        .iter()
        .map(|g| {
            g.iter()
                .map(|it| {
                    let q = (it.weight / step - 1e-9).ceil().max(0.0);
                    if q >= buckets as f64 {
                        usize::MAX
                    } else {
                        q as usize
                    }
                })
                .collect()
        })
        .collect();

    let mut surplus = vec![f64::NEG_INFINITY; buckets];
    let mut weight = vec![0.0; buckets];
    surplus[0] = 0.0;
    let mut choice = vec![u16::MAX; slots * buckets];
    let mut next_s = vec![f64::NEG_INFINITY; buckets];
    let mut next_w = vec![0.0; buckets];
    for (t, group) in items.iter().enumerate() {
        next_s.fill(f64::NEG_INFINITY);
        let row = &mut choice[t * buckets..(t + 1) * buckets];
        for k in 0..buckets {
            let s0 = surplus[k];
            if s0 == f64::NEG_INFINITY {
                continue;
            }
            for (j, it) in group.iter().enumerate() {
                let q = qweights[t][j];
                if q == usize::MAX || k + q >= buckets {
                    continue;
                }
                let s = s0 + it.value - roi_limit * it.weight;
                let k2 = k + q;
                if s > next_s[k2] {
                    next_s[k2] = s;
                    next_w[k2] = weight[k] + it.weight;
                    row[k2] = j as u16;
                }
            }
        }
        std::mem::swap(&mut surplus, &mut next_s);
        std::mem::swap(&mut weight, &mut next_w);
    }

    let mut candidates: Vec<(f64, usize)> = (0..buckets)
        .filter(|&k| surplus[k] > f64::NEG_INFINITY)
        .map(|k| (surplus[k] + roi_limit * weight[k], k))
        .filter(|&(v, k)| feasibility_of(v, weight[k], roi_limit, budget).both || surplus[k] >= 0.0)
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, k_end) in candidates {
        let mut idx = vec![0usize; slots];
        let mut k = k_end;
        for t in (0..slots).rev() {
            let j = choice[t * buckets + k] as usize;
            idx[t] = j;
            k -= qweights[t][j];
        }
        let plan = OraclePlan::evaluate(items, idx);
        if feasibility_of(plan.delivery, plan.cost, roi_limit, budget).both {
            return plan;
        }
    }
    zero_plan()
}

/// Exact optimum by enumerating all `|grid|^T` plans.
pub fn brute_force_oracle(instance: &ProblemInstance, grid: &RatioGrid) -> Result<OraclePlan> {
    let items = enumerate_items(instance, grid);
    brute_force_items(&items, instance.roi_limit, instance.budget)
}

pub fn brute_force_items(items: &[Vec<SlotItem>], roi_limit: f64, budget: f64) -> Result<OraclePlan> {
    let mut total: u128 = 1;
    for g in items {
        total = total.saturating_mul(g.len() as u128);
    }
    if total > 1_000_000 {
        return Err(Error::TooLarge(total));
    }
    let slots = items.len();
    let mut idx = vec![0usize; slots];
    let mut best: Option<OraclePlan> = None;
    loop {
        let plan = OraclePlan::evaluate(items, idx.clone());
        if feasibility_of(plan.delivery, plan.cost, roi_limit, budget).both
            && best.as_ref().is_none_or(|b| plan.delivery > b.delivery)
        {
            best = Some(plan);
        }
        // odometer increment
        let mut t = 0;
        loop {
            if t == slots {
                return Ok(best.expect("the all-zero plan is feasible"));
            }
            idx[t] += 1;
            if idx[t] < items[t].len() {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedRatio {
    pub ratio: f64,
    pub mean_score: f64,
}

/// Best single ratio over a set of days under the average-normalized-score
/// criterion. Ties go to the smaller ratio.
pub fn solve_fixed_ratio(instances: &[ProblemInstance], oracle_values: &[f64], grid: &RatioGrid) -> Result<FixedRatio> {
    if instances.is_empty() || instances.len() != oracle_values.len() {
        return Err(Error::InvalidArgument("need one oracle value per instance, at least one".into()));
    }
    let mut best = FixedRatio {
        ratio: 0.0,
        mean_score: f64::NEG_INFINITY,
    };
    for &ratio in grid.values() {
        let mut total = 0.0;
        for (inst, &dstar) in instances.iter().zip(oracle_values) {
            let plan = vec![ratio; inst.slots_per_day()];
            let (ledger, _) = replay(inst, dstar.max(f64::MIN_POSITIVE), &plan)?;
            let feasible =
                feasibility_of(ledger.cumulative_delivery, ledger.cumulative_cost, inst.roi_limit, inst.budget).both;
            total += day_score(ledger.cumulative_delivery, dstar, feasible);
        }
        let mean = total / instances.len() as f64;
        if mean > best.mean_score {
            best = FixedRatio { ratio, mean_score: mean };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Impression;

    fn inst(slots: usize, imps: &[(usize, f64, f64, f64)], l: f64, b: f64) -> ProblemInstance {
        let imps = imps.iter().map(|&(s, u, d, m)| Impression::new(s, u, d, m).unwrap());
        ProblemInstance::from_impressions(slots, imps, l, b, 1, vec![]).unwrap()
    }

    #[test]
    fn default_grid_has_41_points() {
        let g = RatioGrid::default();
        assert_eq!(g.len(), 41);
        assert_eq!(g.values()[0], 0.0);
        assert_eq!(g.values()[40], 4.0);
        assert_eq!(g.values()[3], 0.3);
        assert!(RatioGrid::new(vec![0.5, 1.0]).is_err());
        assert!(RatioGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(RatioGrid::new(vec![0.0, 5.0]).is_err());
    }

    #[test]
    fn item_examples() {
        let day = inst(1, &[(0, 1.0, 1.0, 0.5), (0, 1.0, 2.0, 1.5)], 1.0, f64::INFINITY);
        let grid = RatioGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let items = enumerate_items(&day, &grid);
        assert_eq!((items[0][0].value, items[0][0].weight), (0.0, 0.0));
        assert_eq!((items[0][1].value, items[0][1].weight), (1.0, 0.5));
        assert_eq!((items[0][2].value, items[0][2].weight), (3.0, 2.0));
    }

    #[test]
    fn unprofitable_market_gives_zero_plan() {
        let day = inst(2, &[(0, 1.0, 0.3, 0.5), (1, 2.0, 1.0, 1.5)], 1.0, f64::INFINITY);
        let plan = solve_slotwise_oracle(&day, &RatioGrid::default());
        assert_eq!(plan.delivery, 0.0);
        assert!(plan.ratios.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn zero_budget_gives_zero_plan() {
        let day = inst(2, &[(0, 1.0, 3.0, 0.5), (1, 2.0, 5.0, 1.5)], 1.0, 0.0);
        let plan = solve_slotwise_oracle(&day, &RatioGrid::default());
        assert_eq!(plan.delivery, 0.0);
        assert_eq!(plan.cost, 0.0);
    }

    #[test]
    fn two_slot_example_matches_enumeration() {
        // Surplus from slot 0 pays for the expensive impression in slot 1.
        let day = inst(2, &[(0, 1.0, 1.0, 0.25), (1, 1.0, 1.0, 1.5), (1, 1.0, 0.5, 0.75)], 1.0, f64::INFINITY);
        let grid = RatioGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let brute = brute_force_oracle(&day, &grid).unwrap();
        let dp = solve_slotwise_oracle(&day, &grid);
        assert_eq!(dp.delivery, brute.delivery);
        // by hand: plans (1,1): D=1.5 C=1.0; (1,2): D=2.5 C=2.5 -> best feasible
        assert_eq!(brute.delivery, 2.5);
        assert_eq!(brute.ratios, vec![1.0, 2.0]);
    }

    #[test]
    fn brute_force_single_impression() {
        let grid = RatioGrid::new(vec![0.0, 1.0]).unwrap();
        let day = inst(1, &[(0, 1.0, 1.0, 0.5)], 1.0, f64::INFINITY);
        let p = brute_force_oracle(&day, &grid).unwrap();
        assert_eq!((p.ratios[0], p.delivery), (1.0, 1.0));
        let day = inst(1, &[(0, 1.0, 0.4, 0.5)], 1.0, f64::INFINITY);
        let p = brute_force_oracle(&day, &grid).unwrap();
        assert_eq!((p.ratios[0], p.delivery), (0.0, 0.0));
    }

    #[test]
    fn brute_force_refuses_huge_instances() {
        let day = inst(8, &[], 1.0, f64::INFINITY);
        assert!(matches!(brute_force_oracle(&day, &RatioGrid::default()), Err(Error::TooLarge(_))));
    }

    #[test]
    fn fixed_ratio_examples() {
        let grid = RatioGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        // beta=1 wins the cheap impression only; beta=2 also wins a loss-making one.
        let day = inst(1, &[(0, 1.0, 1.0, 0.5), (0, 1.0, 0.2, 1.5)], 1.0, f64::INFINITY);
        let fr = solve_fixed_ratio(std::slice::from_ref(&day), &[1.0], &grid).unwrap();
        assert_eq!(fr.ratio, 1.0);
        assert_eq!(fr.mean_score, 1.0);

        // every positive ratio is infeasible: score 0 everywhere except beta=0,
        // where D* = 0 and zero delivery counts as optimal.
        let bad = inst(1, &[(0, 1.0, 0.1, 0.5)], 1.0, f64::INFINITY);
        let fr = solve_fixed_ratio(std::slice::from_ref(&bad), &[0.0], &grid).unwrap();
        assert_eq!(fr.ratio, 0.0);
    }

    #[test]
    fn fixed_ratio_two_day_hand_computed() {
        let grid = RatioGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let a = inst(1, &[(0, 1.0, 1.0, 0.5), (0, 1.0, 1.0, 1.25)], 1.0, f64::INFINITY);
        let b = inst(1, &[(0, 1.0, 1.0, 0.5), (0, 1.0, 0.25, 1.5)], 1.0, f64::INFINITY);
        let dstar = [2.0, 1.0];
        // a: beta 1 -> D=1 ok (0.5), beta 2 -> D=2 C=1.75 ok (1.0)
        // b: beta 1 -> D=1 ok (1.0), beta 2 -> D=1.25 C=2.0 infeasible (0)
        // means: 0 -> 0, 1 -> 0.75, 2 -> 0.5
        let fr = solve_fixed_ratio(&[a, b], &dstar, &grid).unwrap();
        assert_eq!(fr.ratio, 1.0);
        assert_eq!(fr.mean_score, 0.75);
    }
}
