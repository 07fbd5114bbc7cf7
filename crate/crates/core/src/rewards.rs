//! Reward machinery: the terminal reward and cost, the indicator-augmented
//! hard-barrier reward, curriculum constraint schedules with their dense
//! rewards, and the smoothed regret objective used to tune the schedule.
//!
//! Every term is normalized: delivery by the oracle value `D*`, ROI violation
//! by `L`, budget violation by `B`.

use serde::{Deserialize, Serialize};

use crate::env::{feasibility_of, EpisodeLedger, TraceRecord};
use crate::error::{Error, Result};

/// Constants shared by every reward of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext {
    pub roi_limit: f64,
    pub budget: f64,
    pub oracle_value: f64,
    pub slots: usize,
    /// Lower bound on the day's delivery; the never-bid policy gives 0.
    pub d_minus: f64,
}

impl RewardContext {
    pub fn new(roi_limit: f64, budget: f64, oracle_value: f64, slots: usize) -> Self {
        Self {
            roi_limit,
            budget,
            oracle_value,
            slots,
            d_minus: 0.0,
        }
    }
}

fn is_terminal(ledger: &EpisodeLedger, t: usize, slots: usize) -> bool {
    t >= slots || ledger.terminated_early
}

/// Normalized ROI and budget violation of cumulative `(D, C)`.
fn violation(delivery: f64, cost: f64, ctx: &RewardContext) -> f64 {
    let f = feasibility_of(delivery, cost, ctx.roi_limit, ctx.budget);
    let mut v = 0.0;
    if !f.roi_ok {
        v += (ctx.roi_limit - delivery / cost) / ctx.roi_limit;
    }
    if !f.budget_ok {
        v += (cost - ctx.budget) / ctx.budget;
    }
    v
}

/// Terminal-only delivery reward; zero before the episode ends.
pub fn sparse_reward(ledger: &EpisodeLedger, t: usize, ctx: &RewardContext) -> f64 {
    if !is_terminal(ledger, t, ctx.slots) {
        return 0.0;
    }
    (ledger.cumulative_delivery - ctx.d_minus) / ctx.oracle_value
}

/// Terminal-only constraint violation; zero before the episode ends.
pub fn sparse_cost(ledger: &EpisodeLedger, t: usize, ctx: &RewardContext) -> f64 {
    if !is_terminal(ledger, t, ctx.slots) {
        return 0.0;
    }
    violation(ledger.cumulative_delivery, ledger.cumulative_cost, ctx)
}

/// Hard-barrier reward: the delivery reward if both constraints hold, the
/// negated violation otherwise. Zero before termination.
///
/// Every feasible episode with positive delivery scores above every
/// infeasible one, with no trade-off weight.
pub fn indicator_reward(ledger: &EpisodeLedger, ctx: &RewardContext) -> f64 {
    let t = ledger.current_slot;
    if !is_terminal(ledger, t, ctx.slots) {
        return 0.0;
    }
    let f = feasibility_of(ledger.cumulative_delivery, ledger.cumulative_cost, ctx.roi_limit, ctx.budget);
    if f.both {
        sparse_reward(ledger, t, ctx)
    } else {
        -sparse_cost(ledger, t, ctx)
    }
}

/// Relaxation parameters of one dense curriculum stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseStage {
    /// Maximal relative relaxation of the ROI limit, at the start of the day.
    pub roi_relax: f64,
    /// Budget reserve held back early in the day, as a fraction of `B`.
    pub budget_reserve: f64,
}

impl DenseStage {
    pub const UNRELAXED: DenseStage = DenseStage {
        roi_relax: 0.0,
        budget_reserve: 0.0,
    };
}

/// Per-slot constraint limits `(L_t, B_t)` of a stage after `t` of `T` slots.
///
/// `L_t = (1 - b (1 - t/T)^g) L` and `B_t = h (1 - t/T)^g B`, so the limits
/// reach `(L, 0)` at the end of the day.
pub fn curriculum_limits(t: usize, slots: usize, stage: &DenseStage, shape: f64, roi_limit: f64, budget: f64) -> (f64, f64) {
    let remaining = 1.0 - t.min(slots) as f64 / slots as f64;
    let w = remaining.powf(shape);
    let l_t = (1.0 - stage.roi_relax * w) * roi_limit;
    let b_t = if budget.is_finite() && w > 0.0 {
        stage.budget_reserve * w * budget
    } else {
        0.0
    };
    (l_t, b_t)
}

/// Dense curriculum reward for the slot ending at cumulative time `t`.
///
/// Credits the slot delivery while the cumulative constraints of the stage
/// hold, otherwise charges the normalized violation.
pub fn dense_reward(
    ledger: &EpisodeLedger,
    slot_delivery: f64,
    t: usize,
    stage: &DenseStage,
    shape: f64,
    ctx: &RewardContext,
) -> f64 {
    let (l_t, b_t) = curriculum_limits(t, ctx.slots, stage, shape, ctx.roi_limit, ctx.budget);
    let (d, c) = (ledger.cumulative_delivery, ledger.cumulative_cost);
    let roi_short = if c > 0.0 { (l_t - d / c).max(0.0) } else { 0.0 };
    let budget_over = (c - (ctx.budget - b_t)).max(0.0);
    if roi_short == 0.0 && budget_over == 0.0 {
        slot_delivery / ctx.oracle_value
    } else {
        let mut r = -roi_short / ctx.roi_limit;
        if budget_over > 0.0 {
            r -= budget_over / ctx.budget;
        }
        r
    }
}

/// Logistic smoothing of a step at `x = 0`, centered at `-sqrt(v)`.
pub fn smooth_indicator(x: f64, v: f64) -> f64 {
    let z = v * (x + v.sqrt());
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Regret of the smoothed dense proxy against the realized delivery, masked
/// to feasible episodes, and its derivative with respect to the stage's ROI
/// relaxation `b`.
pub fn curriculum_regret_loss(
    trace: &[TraceRecord],
    stage: &DenseStage,
    shape: f64,
    smoothness: f64,
    ctx: &RewardContext,
) -> (f64, f64) {
    let Some(last) = trace.last() else {
        return (0.0, 0.0);
    };
    if !feasibility_of(last.delivery, last.cost, ctx.roi_limit, ctx.budget).both {
        return (0.0, 0.0);
    }
    let mut proxy = 0.0;
    let mut dproxy = 0.0;
    for rec in trace {
        let t = rec.t + 1;
        let (l_t, b_t) = curriculum_limits(t, ctx.slots, stage, shape, ctx.roi_limit, ctx.budget);
        let w = (1.0 - t.min(ctx.slots) as f64 / ctx.slots as f64).powf(shape) * ctx.roi_limit;
        let budget_ok = rec.cost <= ctx.budget - b_t;
        let credit = if budget_ok { rec.slot_delivery / ctx.oracle_value } else { 0.0 };
        let budget_pen = if budget_ok { 0.0 } else { (rec.cost - (ctx.budget - b_t)) / ctx.budget };
        if rec.cost > 0.0 {
            let roi = rec.delivery / rec.cost;
            let s = smooth_indicator(roi - l_t, smoothness);
            let ds = smoothness * s * (1.0 - s) * w;
            let short = (l_t - roi).max(0.0);
            proxy += s * credit - (1.0 - s) * short / ctx.roi_limit - budget_pen;
            dproxy += ds * (credit + short / ctx.roi_limit);
            if short > 0.0 {
                dproxy += (1.0 - s) * w / ctx.roi_limit;
            }
        } else {
            proxy += credit - budget_pen;
        }
    }
    let loss = last.delivery / ctx.oracle_value - proxy;
    (loss, -dproxy)
}

/// One optimized-curriculum step: `b <- clamp(b - lr * dloss/db, 0, 1)`.
pub fn regret_descent_step(stage: &mut DenseStage, grad: f64, learning_rate: f64) {
    stage.roi_relax = (stage.roi_relax - learning_rate * grad).clamp(0.0, 1.0);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub roi_relax: f64,
    pub budget_reserve: f64,
    pub epochs: usize,
}

/// Which reward a training stage pays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageReward {
    Dense(DenseStage),
    Indicator,
}

fn default_shape() -> f64 {
    3.0
}

fn default_smoothness() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

fn default_regret_lr() -> f64 {
    3e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub stages: Vec<StageSpec>,
    #[serde(default = "default_shape")]
    pub shape_exponent: f64,
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    /// The last stage pays the hard-barrier terminal reward.
    #[serde(default = "default_true")]
    pub final_stage_is_sparse: bool,
    /// Learn each dense stage's ROI relaxation by regret descent.
    #[serde(default)]
    pub automated: bool,
    #[serde(default = "default_regret_lr")]
    pub regret_learning_rate: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            stages: vec![
                StageSpec {
                    roi_relax: 0.1,
                    budget_reserve: 0.95,
                    epochs: 3,
                },
                StageSpec {
                    roi_relax: 0.2,
                    budget_reserve: 0.95,
                    epochs: 3,
                },
                StageSpec {
                    roi_relax: 0.0,
                    budget_reserve: 0.0,
                    epochs: 3,
                },
            ],
            shape_exponent: 3.0,
            smoothness: 10.0,
            final_stage_is_sparse: true,
            automated: false,
            regret_learning_rate: 3e-3,
        }
    }
}

impl CurriculumSchedule {
    /// Sparse indicator reward only, for `epochs` epochs.
    pub fn sparse_only(epochs: usize) -> Self {
        Self {
            stages: vec![StageSpec {
                roi_relax: 0.0,
                budget_reserve: 0.0,
                epochs,
            }],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("curriculum needs at least one stage".into()));
        }
        if !(self.shape_exponent > 0.0 && self.smoothness > 0.0) {
            return Err(Error::Config("shape exponent and smoothness must be positive".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, s) in self.stages.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.roi_relax) || !(0.0..=1.0).contains(&s.budget_reserve) {
                return Err(Error::Config(format!("stage {i}: relaxations must lie in [0, 1]")));
            }
            if s.epochs == 0 {
                return Err(Error::Config(format!("stage {i}: epochs must be positive")));
            }
            let dense = !(self.final_stage_is_sparse && i + 1 == self.stages.len());
            if dense {
                if s.roi_relax < prev {
                    return Err(Error::Config(format!(
                        "stage {i}: ROI relaxation must be non-decreasing across stages"
                    )));
                }
                prev = s.roi_relax;
            }
        }
        Ok(())
    }

    pub fn stage_reward(&self, index: usize) -> StageReward {
        let s = &self.stages[index];
        if self.final_stage_is_sparse && index + 1 == self.stages.len() {
            StageReward::Indicator
        } else {
            StageReward::Dense(DenseStage {
                roi_relax: s.roi_relax,
                budget_reserve: s.budget_reserve,
            })
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }
}
