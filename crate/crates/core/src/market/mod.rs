//! Synthetic regime-switching auction markets and the second-price mechanism.
//!
//! A day is `T` slots. Each slot is governed by a latent regime drawn from a
//! Markov chain; the regime sets the arrival rate, the utility distribution and
//! the distribution of the price ratio `rho = m / u`. Because prices factor as
//! `m = u * rho`, a bid `beta * u` wins exactly when `rho < beta`.

mod dataset;

pub use dataset::{read_dataset, write_dataset};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One auctioned ad opportunity.
///
/// Only `slot` and `utility` are visible to bidders. Delivery and market price
/// stay private to the market; [`Impression::reveal`] exposes them for
/// hindsight solvers and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impression {
    slot: usize,
    utility: f64,
    delivery: f64,
    market_price: f64,
}

impl Impression {
    pub fn new(slot: usize, utility: f64, delivery: f64, market_price: f64) -> Result<Self> {
        if !(utility > 0.0 && utility.is_finite()) {
            return Err(Error::InvalidArgument(format!("utility must be positive, got {utility}")));
        }
        if !(market_price > 0.0 && market_price.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "market price must be positive, got {market_price}"
            )));
        }
        if !(delivery >= 0.0 && delivery.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delivery must be non-negative, got {delivery}"
            )));
        }
        Ok(Self {
            slot,
            utility,
            delivery,
            market_price,
        })
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn utility(&self) -> f64 {
        self.utility
    }

    /// Hidden `(delivery, market_price)`. Diagnostics and hindsight use only.
    pub fn reveal(&self) -> (f64, f64) {
        (self.delivery, self.market_price)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionOutcome {
    pub won: bool,
    pub cost: f64,
    pub delivery: f64,
    pub revealed_price: Option<f64>,
}

impl AuctionOutcome {
    pub const LOST: AuctionOutcome = AuctionOutcome {
        won: false,
        cost: 0.0,
        delivery: 0.0,
        revealed_price: None,
    };
}

/// Second-price auction against the highest competing bid. Ties lose.
pub fn run_auction(bid: f64, imp: &Impression) -> AuctionOutcome {
    if bid > imp.market_price {
        AuctionOutcome {
            won: true,
            cost: imp.market_price,
            delivery: imp.delivery,
            revealed_price: Some(imp.market_price),
        }
    } else {
        AuctionOutcome::LOST
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub regime_id: usize,
    pub price_ratio_log_mean: f64,
    pub price_ratio_log_std: f64,
    pub arrival_rate: f64,
    pub utility_log_mean: f64,
    pub utility_log_std: f64,
    #[serde(default)]
    pub delivery_noise_log_std: f64,
}

impl RegimeModel {
    /// `E[rho]` under this regime.
    pub fn mean_price_ratio(&self) -> f64 {
        (self.price_ratio_log_mean + 0.5 * self.price_ratio_log_std.powi(2)).exp()
    }

    /// Probability that a ratio bid `beta` wins one auction, `P(rho < beta)`.
    pub fn win_probability(&self, beta: f64) -> f64 {
        if beta <= 0.0 {
            return 0.0;
        }
        crate::math::norm_cdf((beta.ln() - self.price_ratio_log_mean) / self.price_ratio_log_std)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.price_ratio_log_std > 0.0
            && self.utility_log_std > 0.0
            && self.arrival_rate > 0.0
            && self.delivery_noise_log_std >= 0.0
            && self.price_ratio_log_mean.is_finite()
            && self.utility_log_mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("regime {} has invalid parameters", self.regime_id)))
        }
    }
}

fn default_slots() -> usize {
    48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub regimes: Vec<RegimeModel>,
    /// Row-stochastic per-slot regime transition matrix.
    pub transition_matrix: Vec<Vec<f64>>,
    #[serde(default = "default_slots")]
    pub slots_per_day: usize,
    #[serde(default)]
    pub seed: u64,
    /// Minimum gap between the price-ratio log means of any two regimes.
    #[serde(default)]
    pub min_separation: f64,
}

impl MarketConfig {
    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.regimes.len();
        if k == 0 {
            return Err(Error::Config("market needs at least one regime".into()));
        }
        if self.slots_per_day < 2 {
            return Err(Error::Config("slots_per_day must be at least 2".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            r.validate()?;
            if r.regime_id != i {
                return Err(Error::Config(format!("regime at index {i} has id {}", r.regime_id)));
            }
        }
        if self.transition_matrix.len() != k {
            return Err(Error::Config(format!("transition matrix must be {k}x{k}")));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            if row.len() != k || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Config(format!("transition row {i} is invalid")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("transition row {i} sums to {s}")));
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                let gap =
                    (self.regimes[a].price_ratio_log_mean - self.regimes[b].price_ratio_log_mean).abs();
                if gap < self.min_separation {
                    return Err(Error::Config(format!(
                        "regimes {a} and {b} are separated by {gap}, need {}",
                        self.min_separation
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stationary distribution of the regime chain.
    pub fn stationary_distribution(&self) -> Vec<f64> {
        stationary(&self.transition_matrix)
    }

    /// The default two-regime benchmark: a cheap regime (median price ratio
    /// 0.5) and an expensive one (median 2.0), sticky transitions, ~50
    /// impressions per slot.
    pub fn two_regime_default() -> Self {
        let regime = |id: usize, ratio: f64| RegimeModel {
            regime_id: id,
            price_ratio_log_mean: f64::ln(ratio),
            price_ratio_log_std: 0.5,
            arrival_rate: 50.0,
            utility_log_mean: 0.0,
            utility_log_std: 0.5,
            delivery_noise_log_std: 0.3,
        };
        MarketConfig {
            regimes: vec![regime(0, 0.5), regime(1, 2.0)],
            transition_matrix: vec![vec![0.95, 0.05], vec![0.05, 0.95]],
            slots_per_day: 48,
            seed: 7,
            min_separation: 0.5,
        }
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` by Gaussian elimination, falling back to
/// a Cesaro average of the chain when the system is singular.
fn stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p.len();
    if k == 1 {
        return vec![1.0];
    }
    // Rows 0..k-1: (P^T - I) pi = 0; last row replaced by normalization.
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[k - 1][j] = 1.0;
    }
    a[k - 1][k] = 1.0;
    let mut singular = false;
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-14 {
            singular = true;
            break;
        }
        a.swap(col, piv);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    if !singular {
        let pi: Vec<f64> = (0..k).map(|i| (a[i][k] / a[i][i]).max(0.0)).collect();
        let s: f64 = pi.iter().sum();
        if s > 0.0 {
            return pi.into_iter().map(|x| x / s).collect();
        }
    }
    let mut dist = vec![1.0 / k as f64; k];
    let mut avg = vec![0.0; k];
    let n = 2000;
    for _ in 0..n {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += dist[i] * p[i][j];
            }
        }
        dist = next;
        for j in 0..k {
            avg[j] += dist[j] / n as f64;
        }
    }
    avg
}

/// One problem instance: a day of impressions grouped by slot plus the
/// ROI limit `L` and budget `B` (`f64::INFINITY` when unconstrained).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub slots: Vec<Vec<Impression>>,
    pub roi_limit: f64,
    pub budget: f64,
    pub num_regimes: usize,
    /// Ground-truth regime per slot. Never shown to bidders.
    pub regime_trace: Vec<usize>,
}

impl ProblemInstance {
    pub fn slots_per_day(&self) -> usize {
        self.slots.len()
    }

    pub fn num_impressions(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    pub fn has_budget(&self) -> bool {
        self.budget.is_finite()
    }

    pub fn with_constraints(mut self, roi_limit: f64, budget: f64) -> Self {
        self.roi_limit = roi_limit;
        self.budget = budget;
        self
    }

    /// Builds an instance from a flat impression list.
    pub fn from_impressions(
        slots_per_day: usize,
        impressions: impl IntoIterator<Item = Impression>,
        roi_limit: f64,
        budget: f64,
        num_regimes: usize,
        regime_trace: Vec<usize>,
    ) -> Result<Self> {
        let mut slots = vec![Vec::new(); slots_per_day];
        for imp in impressions {
            if imp.slot >= slots_per_day {
                return Err(Error::InvalidArgument(format!(
                    "impression slot {} out of range for T={slots_per_day}",
                    imp.slot
                )));
            }
            slots[imp.slot].push(imp);
        }
        let inst = ProblemInstance {
            slots,
            roi_limit,
            budget,
            num_regimes,
            regime_trace,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.roi_limit > 0.0 && self.roi_limit.is_finite()) {
            return Err(Error::InvalidArgument(format!("ROI limit must be positive, got {}", self.roi_limit)));
        }
        if !(self.budget >= 0.0) {
            return Err(Error::InvalidArgument(format!("budget must be non-negative, got {}", self.budget)));
        }
        if !self.regime_trace.is_empty() && self.regime_trace.len() != self.slots.len() {
            return Err(Error::InvalidArgument("regime trace length must equal T".into()));
        }
        if self.regime_trace.iter().any(|&r| r >= self.num_regimes.max(1)) {
            return Err(Error::InvalidArgument("regime trace index out of range".into()));
        }
        Ok(())
    }
}

/// Per-day RNG stream: the config seed picks the key, the day seed the stream.
pub fn day_rng(config_seed: u64, day_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config_seed);
    rng.set_stream(day_seed);
    rng
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples a regime trace from the chain started at its stationary law.
pub fn sample_regime_trace(config: &MarketConfig, len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut trace = Vec::with_capacity(len);
    if len == 0 {
        return trace;
    }
    let mut r = sample_categorical(&config.stationary_distribution(), rng);
    trace.push(r);
    for _ in 1..len {
        r = sample_categorical(&config.transition_matrix[r], rng);
        trace.push(r);
    }
    trace
}

/// Generates one day. Deterministic in `(config.seed, day_seed)`.
pub fn generate_day(config: &MarketConfig, constraints: (f64, f64), day_seed: u64) -> Result<ProblemInstance> {
    config.validate()?;
    let mut rng = day_rng(config.seed, day_seed);
    let trace = sample_regime_trace(config, config.slots_per_day, &mut rng);
    fill_day(config, constraints, trace, &mut rng)
}

/// Generates a day whose regime sequence is fixed in advance, e.g. to build
/// test sets with a scheduled mid-day switch.
pub fn generate_day_with_trace(
    config: &MarketConfig,
    constraints: (f64, f64),
    trace: Vec<usize>,
    day_seed: u64,
) -> Result<ProblemInstance> {
    config.validate()?;
    if trace.len() != config.slots_per_day || trace.iter().any(|&r| r >= config.num_regimes()) {
        return Err(Error::InvalidArgument("regime trace does not match the market".into()));
    }
    let mut rng = day_rng(config.seed, day_seed);
    fill_day(config, constraints, trace, &mut rng)
}

fn fill_day(
    config: &MarketConfig,
    (roi_limit, budget): (f64, f64),
    trace: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<ProblemInstance> {
    let mut slots = Vec::with_capacity(trace.len());
    for (t, &r) in trace.iter().enumerate() {
        let regime = &config.regimes[r];
        let count = Poisson::new(regime.arrival_rate)
            .map_err(|e| Error::Config(format!("arrival rate: {e}")))?
            .sample(rng) as usize;
        let utility = LogNormal::new(regime.utility_log_mean, regime.utility_log_std)
            .map_err(|e| Error::Config(format!("utility law: {e}")))?;
        let ratio = LogNormal::new(regime.price_ratio_log_mean, regime.price_ratio_log_std)
            .map_err(|e| Error::Config(format!("price law: {e}")))?;
        let noise_std = regime.delivery_noise_log_std;
        let noise = LogNormal::new(-0.5 * noise_std * noise_std, noise_std)
            .map_err(|e| Error::Config(format!("delivery noise: {e}")))?;
        let mut slot = Vec::with_capacity(count);
        for _ in 0..count {
            let u = utility.sample(rng);
            let m = u * ratio.sample(rng);
            let eta = if noise_std == 0.0 { 1.0 } else { noise.sample(rng) };
            slot.push(Impression::new(t, u, u * eta, m)?);
        }
        slots.push(slot);
    }
    let inst = ProblemInstance {
        slots,
        roi_limit,
        budget,
        num_regimes: config.num_regimes(),
        regime_trace: trace,
    };
    inst.validate()?;
    Ok(inst)
}
