//! Benchmark day sets: constraint settings, split-tagged day seeds and the
//! oracle values every metric is normalized by.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Setting;
use crate::error::{Error, Result};
use crate::market::{day_rng, generate_day, generate_day_with_trace, MarketConfig, ProblemInstance};
use crate::oracle::{solve_slotwise_oracle_with, OracleOptions, OraclePlan, RatioGrid};

fn default_roi_limit() -> f64 {
    1.0
}
fn default_roi_range() -> [f64; 2] {
    [0.8, 1.5]
}
fn default_budget_fraction() -> [f64; 2] {
    [0.25, 0.75]
}

/// How each day's `(L, B)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub setting: Setting,
    /// `L` of the single-constraint setting.
    #[serde(default = "default_roi_limit")]
    pub roi_limit: f64,
    /// Range `L` is drawn from in the multi-constraint setting.
    #[serde(default = "default_roi_range")]
    pub roi_range: [f64; 2],
    /// Range of `B` as a fraction of the day's oracle spend without budget.
    #[serde(default = "default_budget_fraction")]
    pub budget_fraction: [f64; 2],
}

impl Default for Constraints {
    fn default() -> Self {
        Self::single(1.0)
    }
}

impl Constraints {
    pub fn single(roi_limit: f64) -> Self {
        Self {
            setting: Setting::SC,
            roi_limit,
            roi_range: default_roi_range(),
            budget_fraction: default_budget_fraction(),
        }
    }

    pub fn multi() -> Self {
        Self {
            setting: Setting::MC,
            ..Self::single(1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.roi_range;
        let [flo, fhi] = self.budget_fraction;
        if !(self.roi_limit > 0.0 && lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config("constraints: ROI limits must be positive and ordered".into()));
        }
        if !(flo >= 0.0 && flo <= fhi && fhi.is_finite()) {
            return Err(Error::Config("constraints: budget fractions must be non-negative and ordered".into()));
        }
        Ok(())
    }
}

/// Which family of days a seed belongs to; keeps the splits disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Shifted,
    Baseline,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Shifted => "shifted",
            Split::Baseline => "baseline",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
            Split::Shifted => 3,
            Split::Baseline => 4,
        }
    }
}

/// Day seed for day `index` of `split` under run seed `seed`.
pub fn day_seed(split: Split, seed: u64, index: usize) -> u64 {
    (split.tag() << 56) ^ ((seed & 0xff_ffff) << 32) ^ index as u64
}

/// A generated day with its oracle plan.
#[derive(Debug, Clone)]
pub struct BenchDay {
    pub instance: ProblemInstance,
    pub oracle: OraclePlan,
}

impl BenchDay {
    pub fn oracle_value(&self) -> f64 {
        self.oracle.delivery
    }
}

/// Oracle solver settings shared by a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSetup {
    pub grid: RatioGrid,
    pub options: OracleOptions,
}

impl Default for OracleSetup {
    fn default() -> Self {
        Self {
            grid: RatioGrid::default(),
            options: OracleOptions::default(),
        }
    }
}

/// Attaches constraints to a day generated without a budget and solves its
/// oracle. In the multi-constraint setting `L` and the budget fraction come
/// from `rng`; `B` is that fraction of the oracle spend without budget.
pub fn constrain_day(
    day: ProblemInstance,
    constraints: &Constraints,
    oracle: &OracleSetup,
    rng: &mut impl Rng,
) -> Result<BenchDay> {
    match constraints.setting {
        Setting::SC => {
            let instance = day.with_constraints(constraints.roi_limit, f64::INFINITY);
            let plan = solve_slotwise_oracle_with(&instance, &oracle.grid, &oracle.options);
            Ok(BenchDay { instance, oracle: plan })
        }
        Setting::MC => {
            let [lo, hi] = constraints.roi_range;
            let l = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let [flo, fhi] = constraints.budget_fraction;
            let f = if fhi > flo { rng.random_range(flo..=fhi) } else { flo };
            let free = day.with_constraints(l, f64::INFINITY);
            let spend = solve_slotwise_oracle_with(&free, &oracle.grid, &oracle.options).cost;
            let instance = free.with_constraints(l, f * spend);
            let plan = solve_slotwise_oracle_with(&instance, &oracle.grid, &oracle.options);
            Ok(BenchDay { instance, oracle: plan })
        }
    }
}

fn constraint_rng(market: &MarketConfig, day_seed: u64) -> rand_chacha::ChaCha8Rng {
    day_rng(market.seed ^ 0x6d63_5f63_6f6e_7374, day_seed)
}

/// Generates and constrains day `index` of a split.
pub fn bench_day(
    market: &MarketConfig,
    constraints: &Constraints,
    oracle: &OracleSetup,
    split: Split,
    seed: u64,
    index: usize,
) -> Result<BenchDay> {
    let s = day_seed(split, seed, index);
    let day = generate_day(market, (constraints.roi_limit, f64::INFINITY), s)?;
    constrain_day(day, constraints, oracle, &mut constraint_rng(market, s))
}

/// Like [`bench_day`] with a prescribed regime sequence.
pub fn bench_day_with_trace(
    market: &MarketConfig,
    constraints: &Constraints,
    oracle: &OracleSetup,
    trace: Vec<usize>,
    split: Split,
    seed: u64,
    index: usize,
) -> Result<BenchDay> {
    let s = day_seed(split, seed, index);
    let day = generate_day_with_trace(market, (constraints.roi_limit, f64::INFINITY), trace, s)?;
    constrain_day(day, constraints, oracle, &mut constraint_rng(market, s))
}

/// `count` consecutive days of a split.
pub fn bench_days(
    market: &MarketConfig,
    constraints: &Constraints,
    oracle: &OracleSetup,
    split: Split,
    seed: u64,
    count: usize,
) -> Result<Vec<BenchDay>> {
    (0..count)
        .map(|i| {
            bench_day(market, constraints, oracle, split, seed, i)
                .map_err(|e| e.context(format!("{} day {i} (seed {seed})", split.name())))
        })
        .collect()
}

/// The market with every regime's price-ratio log mean moved by `offset`.
pub fn shifted_market(market: &MarketConfig, offset: f64) -> Result<MarketConfig> {
    let mut shifted = market.clone();
    for r in &mut shifted.regimes {
        r.price_ratio_log_mean += offset;
    }
    let overlap = shifted.regimes.iter().any(|s| {
        market
            .regimes
            .iter()
            .any(|r| (r.price_ratio_log_mean - s.price_ratio_log_mean).abs() < 1e-9)
    });
    if overlap {
        return Err(Error::Config(format!(
            "shift {offset} maps a regime onto a training regime's price level"
        )));
    }
    Ok(shifted)
}
