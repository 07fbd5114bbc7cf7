//! Posterior-sampling double Q-learning over a discrete ratio grid.
//!
//! The Q-function takes the seven slot features (rescaled to `[-1, 1]`)
//! concatenated with a one-hot regime hypothesis `z` drawn from the regime
//! posterior, and outputs one value per grid ratio. Two online estimators are
//! regressed on a shared target built from the smaller of the two target
//! estimators' maxima.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qnet::{clip_grad_norm, td_loss_grad, Adam, Dense, Mlp};
use super::replay::{ReplayBuffer, Transition};
use super::{feature_normalizer, outcome_of, DayOutcome};
use crate::belief::{init_belief, thompson_sample, update_belief, Belief};
use crate::env::{EpisodeLedger, Env, TraceRecord, CLIP_RANGES, MAX_RATIO, OBS_DIM};
use crate::error::{Error, Result};
use crate::market::{MarketConfig, ProblemInstance};
use crate::oracle::RatioGrid;
use crate::rewards::{
    curriculum_regret_loss, dense_reward, indicator_reward, regret_descent_step, CurriculumSchedule, DenseStage,
    RewardContext, StageReward,
};

/// Affine map of each clipped feature onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
}

impl Default for FeatureScaler {
    fn default() -> Self {
        Self {
            center: CLIP_RANGES.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            half_range: CLIP_RANGES.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect(),
        }
    }
}

impl FeatureScaler {
    /// Centers each feature on its sample mean and scales two standard
    /// deviations to one. Features with (near) constant samples keep the
    /// clip-range scale.
    pub fn fit(samples: &[[f64; OBS_DIM]]) -> Self {
        let mut scaler = Self::default();
        if samples.len() < 2 {
            return scaler;
        }
        let n = samples.len() as f64;
        for i in 0..OBS_DIM {
            let mean = samples.iter().map(|x| x[i]).sum::<f64>() / n;
            let var = samples.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if sd > 1e-6 * scaler.half_range[i] {
                scaler.center[i] = mean;
                scaler.half_range[i] = 2.0 * sd;
            }
        }
        scaler
    }

    pub fn apply(&self, obs: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        std::array::from_fn(|i| (obs[i] - self.center[i]) / self.half_range[i])
    }
}

/// Where the regime hypothesis `z` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefMode {
    /// Filtered posterior, updated after every slot.
    #[default]
    Posterior,
    /// Uniform belief that never sees evidence.
    FrozenUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    /// Softmax over Q-values at the given temperature.
    Train { temperature: f64 },
    /// Greedy, ties to the smaller index.
    Eval,
}

/// Index of the largest value; the first one on ties.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Chooses an action index from Q-values.
pub fn select_action(q: &[f64], mode: ActMode, rng: &mut impl Rng) -> usize {
    match mode {
        ActMode::Eval => argmax(q),
        ActMode::Train { temperature } => {
            let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = q.iter().map(|v| ((v - max) / temperature).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    return i;
                }
                u -= wi;
            }
            argmax(q)
        }
    }
}

/// `r` if the transition ends the day, else `r + gamma * min(max1, max2)`.
pub fn td_target_from_maxima(reward: f64, done: bool, maxima: (f64, f64), gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * maxima.0.min(maxima.1)
    }
}

/// Q-function with its action grid, feature scaler and the regime model used
/// by its belief filter.
#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    pub online: [Mlp; 2],
    pub target: [Mlp; 2],
    pub grid: RatioGrid,
    pub scaler: FeatureScaler,
    pub market: MarketConfig,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

impl QPolicy {
    pub fn new(market: MarketConfig, grid: RatioGrid, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let sizes = layer_sizes(OBS_DIM + market.num_regimes(), hidden, grid.len());
        let online = [Mlp::new(&sizes, rng), Mlp::new(&sizes, rng)];
        Self {
            target: online.clone(),
            online,
            grid,
            scaler: FeatureScaler::default(),
            market,
        }
    }

    /// All parameters zero: every Q-value is 0.
    pub fn zeros(market: MarketConfig, grid: RatioGrid, hidden: &[usize]) -> Self {
        let sizes = layer_sizes(OBS_DIM + market.num_regimes(), hidden, grid.len());
        let online = [Mlp::zeros(&sizes), Mlp::zeros(&sizes)];
        Self {
            target: online.clone(),
            online,
            grid,
            scaler: FeatureScaler::default(),
            market,
        }
    }

    pub fn num_regimes(&self) -> usize {
        self.market.num_regimes()
    }

    pub fn input_dim(&self) -> usize {
        OBS_DIM + self.num_regimes()
    }

    fn encode_row(&self, row: &mut [f64], obs: &[f64; OBS_DIM], z: usize) {
        row[..OBS_DIM].copy_from_slice(&self.scaler.apply(obs));
        row[OBS_DIM..].iter_mut().for_each(|x| *x = 0.0);
        row[OBS_DIM + z] = 1.0;
    }

    /// Network input rows for a batch of `(obs, z)` pairs.
    pub fn encode<'a>(&self, rows: impl ExactSizeIterator<Item = (&'a [f64; OBS_DIM], usize)>) -> Array2<f64> {
        let mut x = Array2::zeros((rows.len(), self.input_dim()));
        for (mut row, (obs, z)) in x.rows_mut().into_iter().zip(rows) {
            self.encode_row(row.as_slice_mut().expect("standard layout"), obs, z);
        }
        x
    }

    /// Average of the two online estimators.
    pub fn q_values(&self, obs: &[f64; OBS_DIM], z: usize) -> Vec<f64> {
        let x = self.encode(std::iter::once((obs, z)));
        let a = self.online[0].forward(x.view());
        let b = self.online[1].forward(x.view());
        a.iter().zip(b.iter()).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn act(&self, obs: &[f64; OBS_DIM], z: usize, mode: ActMode, rng: &mut impl Rng) -> usize {
        select_action(&self.q_values(obs, z), mode, rng)
    }

    pub fn sync_targets(&mut self) {
        self.target = self.online.clone();
    }

    /// Bootstrapped regression targets for a batch.
    pub fn td_targets(&self, batch: &[&Transition], gamma: f64) -> Vec<f64> {
        let xn = self.encode(batch.iter().map(|t| (&t.next_obs, t.next_z)));
        let q1 = self.target[0].forward(xn.view());
        let q2 = self.target[1].forward(xn.view());
        let rowmax = |q: &Array2<f64>, i: usize| q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        batch
            .iter()
            .enumerate()
            .map(|(i, t)| td_target_from_maxima(t.reward, t.done, (rowmax(&q1, i), rowmax(&q2, i)), gamma))
            .collect()
    }

    pub fn td_target(&self, transition: &Transition, gamma: f64) -> f64 {
        self.td_targets(&[transition], gamma)[0]
    }

    /// Squared TD loss of online estimator `net` against fixed targets, with
    /// its parameter gradients.
    pub fn td_loss_and_grads(&self, net: usize, batch: &[&Transition], targets: &[f64]) -> (f64, Vec<Dense>) {
        let x = self.encode(batch.iter().map(|t| (&t.obs, t.z)));
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let cache = self.online[net].forward_cached(x.view());
        let (loss, g) = td_loss_grad(&cache.output, &actions, targets);
        (loss, self.online[net].backward(&cache, g))
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_lr() -> f64 {
    3e-4
}
fn default_milestones() -> Vec<usize> {
    vec![4000, 8000, 12000]
}
fn default_decay() -> f64 {
    0.5
}
fn default_batch() -> usize {
    256
}
fn default_capacity() -> usize {
    100_000
}
fn default_sync() -> usize {
    100
}
fn default_tau_start() -> f64 {
    1.0
}
fn default_tau_end() -> f64 {
    0.05
}
fn default_episodes_per_epoch() -> usize {
    500
}
fn default_updates_per_episode() -> usize {
    48
}
fn default_gamma() -> f64 {
    1.0
}
fn default_grad_clip() -> Option<f64> {
    Some(10.0)
}
fn default_divergence() -> f64 {
    1e3
}
fn default_grid_step() -> f64 {
    0.1
}
fn default_window() -> usize {
    50
}
fn default_scaler_days() -> usize {
    0
}

/// Agent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Update counts at which the step size is multiplied by `lr_decay`.
    #[serde(default = "default_milestones")]
    pub lr_milestones: Vec<usize>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    /// Gradient updates between target syncs.
    #[serde(default = "default_sync")]
    pub sync_every: usize,
    #[serde(default = "default_tau_start")]
    pub temperature_start: f64,
    #[serde(default = "default_tau_end")]
    pub temperature_end: f64,
    /// Episodes over which the temperature anneals; defaults to the first two
    /// curriculum stages.
    #[serde(default)]
    pub temperature_anneal_episodes: Option<usize>,
    #[serde(default = "default_episodes_per_epoch")]
    pub episodes_per_epoch: usize,
    #[serde(default = "default_updates_per_episode")]
    pub updates_per_episode: usize,
    /// Transitions required before the first update; defaults to one batch.
    #[serde(default)]
    pub min_replay: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default = "default_divergence")]
    pub divergence_limit: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Episodes in the rolling windows of the training log.
    #[serde(default = "default_window")]
    pub rolling_window: usize,
    #[serde(default)]
    pub belief_mode: BeliefMode,
    /// Training days rolled out with uniformly random ratios to fit the
    /// feature scaler. Zero keeps the clip-range scaling.
    #[serde(default = "default_scaler_days")]
    pub scaler_days: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            learning_rate: default_lr(),
            lr_milestones: default_milestones(),
            lr_decay: default_decay(),
            batch_size: default_batch(),
            buffer_capacity: default_capacity(),
            sync_every: default_sync(),
            temperature_start: default_tau_start(),
            temperature_end: default_tau_end(),
            temperature_anneal_episodes: None,
            episodes_per_epoch: default_episodes_per_epoch(),
            updates_per_episode: default_updates_per_episode(),
            min_replay: None,
            gamma: default_gamma(),
            grad_clip: default_grad_clip(),
            divergence_limit: default_divergence(),
            grid_step: default_grid_step(),
            rolling_window: default_window(),
            belief_mode: BeliefMode::Posterior,
            scaler_days: default_scaler_days(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("agent: {m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return bad("learning rate and decay must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.sync_every == 0 || self.rolling_window == 0 {
            return bad("batch size, buffer capacity, sync interval and window must be positive");
        }
        if !(self.temperature_start > 0.0 && self.temperature_end > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.divergence_limit > 0.0) {
            return bad("divergence limit must be positive");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("gradient clip must be positive");
        }
        let grid = RatioGrid::uniform(self.grid_step).map_err(|e| Error::Config(format!("agent: {e}")))?;
        if grid.values().last() != Some(&MAX_RATIO) {
            return bad("grid step must divide the ratio range [0, 4]");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<RatioGrid> {
        RatioGrid::uniform(self.grid_step)
    }

    fn learning_rate_at(&self, updates: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| updates >= m).count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }
}

/// Supplies the training day and its oracle value for an episode index.
pub trait DaySource {
    fn day(&mut self, episode: usize) -> Result<(ProblemInstance, f64)>;
}

impl<F: FnMut(usize) -> Result<(ProblemInstance, f64)>> DaySource for F {
    fn day(&mut self, episode: usize) -> Result<(ProblemInstance, f64)> {
        self(episode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub episode: usize,
    pub stage: usize,
    pub temperature: f64,
    /// Sum of the rewards the active stage paid.
    pub episode_return: f64,
    /// Hard-barrier terminal reward of the episode.
    pub objective: f64,
    pub feasible: bool,
    /// Rolling mean of `objective`.
    pub rolling_objective: f64,
    pub rolling_csr: f64,
    pub roi_relax: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub episode: usize,
    pub update: usize,
    pub max_abs_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub episodes: usize,
    pub updates: usize,
    /// Set when some |Q| exceeded the divergence limit; updates stop there.
    pub diverged: Option<Divergence>,
    /// Final ROI relaxation of each dense stage.
    pub roi_relax: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: QPolicy,
    pub log: Vec<TrainLogEntry>,
    pub diagnostics: TrainDiagnostics,
}

/// Per-slot reward hook: ledger after the slot, slot delivery.
type RewardFn<'a> = &'a dyn Fn(&EpisodeLedger, f64) -> f64;

struct DayRun {
    outcome: DayOutcome,
    transitions: Vec<Transition>,
    ledger: EpisodeLedger,
}

/// Plays one day, sampling a regime hypothesis before every slot.
fn play_day(
    policy: &QPolicy,
    instance: &ProblemInstance,
    oracle_value: f64,
    belief_mode: BeliefMode,
    mode: ActMode,
    reward: Option<RewardFn<'_>>,
    rng: &mut ChaCha8Rng,
) -> Result<DayRun> {
    let k = policy.num_regimes();
    if instance.num_regimes != 0 && instance.num_regimes != k && belief_mode == BeliefMode::Posterior {
        log::debug!("instance declares {} regimes, policy filters over {k}", instance.num_regimes);
    }
    let (mut env, first) = Env::reset(instance, feature_normalizer(oracle_value))?;
    let mut obs = first.to_array();
    let uniform = init_belief(k)?;
    let mut belief: Belief = uniform.clone();
    let mut z = thompson_sample(&belief, rng);
    let mut transitions = Vec::with_capacity(instance.slots_per_day());
    let mut ratios = Vec::with_capacity(instance.slots_per_day());
    while !env.is_done() {
        let action = policy.act(&obs, z, mode, rng);
        let ratio = policy.grid.values()[action];
        let step = env.step(ratio)?;
        ratios.push(ratio);
        if belief_mode == BeliefMode::Posterior {
            belief = update_belief(&belief, &step.summary.evidence, &policy.market.regimes, &policy.market.transition_matrix)?
                .belief;
        }
        let next_z = thompson_sample(&belief, rng);
        let next_obs = step.observation.to_array();
        let r = reward.map_or(0.0, |f| f(env.ledger(), step.summary.delivery));
        transitions.push(Transition {
            obs,
            z,
            action,
            reward: r,
            next_obs,
            next_z,
            done: step.done,
        });
        obs = next_obs;
        z = next_z;
    }
    Ok(DayRun {
        outcome: outcome_of(&env, ratios),
        ledger: env.ledger().clone(),
        transitions,
    })
}

fn trace_of(ledger: &EpisodeLedger, ratios: &[f64]) -> Vec<TraceRecord> {
    let (mut d, mut c) = (0.0, 0.0);
    ratios
        .iter()
        .enumerate()
        .map(|(t, &beta)| {
            d += ledger.slot_delivery[t];
            c += ledger.slot_cost[t];
            TraceRecord {
                t,
                beta,
                slot_delivery: ledger.slot_delivery[t],
                slot_cost: ledger.slot_cost[t],
                delivery: d,
                cost: c,
            }
        })
        .collect()
}

struct Learner {
    opts: [Adam; 2],
    updates: usize,
}

impl Learner {
    /// One gradient step on both online estimators. Returns the largest |Q|
    /// seen in the batch.
    fn update(&mut self, policy: &mut QPolicy, batch: &[&Transition], config: &AgentConfig) -> f64 {
        let targets = policy.td_targets(batch, config.gamma);
        let lr = config.learning_rate_at(self.updates);
        let x = policy.encode(batch.iter().map(|t| (&t.obs, t.z)));
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let mut max_q = targets.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        for i in 0..2 {
            let cache = policy.online[i].forward_cached(x.view());
            max_q = cache.output.iter().fold(max_q, |m, q| m.max(q.abs()));
            let (_, g) = td_loss_grad(&cache.output, &actions, &targets);
            let mut grads = policy.online[i].backward(&cache, g);
            if let Some(c) = config.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            self.opts[i].step(&mut policy.online[i], &grads, lr);
        }
        self.updates += 1;
        if self.updates % config.sync_every == 0 {
            policy.sync_targets();
        }
        max_q
    }
}

/// Observations of random-ratio rollouts on the first `count` training days.
fn scaler_samples(grid: &RatioGrid, days: &mut dyn DaySource, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<[f64; OBS_DIM]>> {
    let mut samples = Vec::new();
    for i in 0..count {
        let (instance, oracle_value) = days.day(i).map_err(|e| e.context(format!("scaler day {i}")))?;
        let (mut env, first) = Env::reset(&instance, feature_normalizer(oracle_value))?;
        samples.push(first.to_array());
        while !env.is_done() {
            let ratio = grid.values()[rng.random_range(0..grid.len())];
            samples.push(env.step(ratio)?.observation.to_array());
        }
    }
    Ok(samples)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains a policy through the curriculum. Deterministic in `seed` and the
/// day source.
pub fn train(
    market: &MarketConfig,
    schedule: &CurriculumSchedule,
    config: &AgentConfig,
    days: &mut dyn DaySource,
    seed: u64,
) -> Result<TrainOutput> {
    market.validate()?;
    schedule.validate()?;
    config.validate()?;
    let grid = config.grid()?;
    let mut policy = QPolicy::new(market.clone(), grid, &config.hidden, &mut rng_stream(seed, 0));
    if config.scaler_days > 0 {
        let samples = scaler_samples(&policy.grid, days, config.scaler_days, &mut rng_stream(seed, 3))?;
        policy.scaler = FeatureScaler::fit(&samples);
    }
    let mut act_rng = rng_stream(seed, 1);
    let mut sample_rng = rng_stream(seed, 2);
    let mut learner = Learner {
        opts: [Adam::new(&policy.online[0]), Adam::new(&policy.online[1])],
        updates: 0,
    };
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let min_replay = config.min_replay.unwrap_or(config.batch_size).max(1);

    let epe = config.episodes_per_epoch;
    let anneal = config
        .temperature_anneal_episodes
        .unwrap_or_else(|| schedule.stages.iter().take(2).map(|s| s.epochs).sum::<usize>() * epe);
    let temperature = |episode: usize| {
        if anneal == 0 {
            return config.temperature_end;
        }
        let f = (episode as f64 / anneal as f64).min(1.0);
        config.temperature_start + (config.temperature_end - config.temperature_start) * f
    };

    let mut relax: Vec<f64> = schedule.stages.iter().map(|s| s.roi_relax).collect();
    let mut log = Vec::with_capacity(schedule.total_epochs() * epe);
    let mut window: VecDeque<(f64, bool)> = VecDeque::with_capacity(config.rolling_window);
    let mut diverged = None;
    let mut episode = 0;

    for (stage_idx, spec) in schedule.stages.iter().enumerate() {
        for _ in 0..spec.epochs * epe {
            let stage_reward = match schedule.stage_reward(stage_idx) {
                StageReward::Dense(s) => StageReward::Dense(DenseStage {
                    roi_relax: relax[stage_idx],
                    ..s
                }),
                r => r,
            };
            let (instance, oracle_value) = days
                .day(episode)
                .map_err(|e| e.context(format!("training day for episode {episode}")))?;
            let ctx = RewardContext::new(
                instance.roi_limit,
                instance.budget,
                feature_normalizer(oracle_value),
                instance.slots_per_day(),
            );
            let shape = schedule.shape_exponent;
            let reward = move |ledger: &EpisodeLedger, slot_delivery: f64| match stage_reward {
                StageReward::Dense(stage) => {
                    dense_reward(ledger, slot_delivery, ledger.current_slot, &stage, shape, &ctx)
                }
                StageReward::Indicator => indicator_reward(ledger, &ctx),
            };
            let tau = temperature(episode);
            let run = play_day(
                &policy,
                &instance,
                oracle_value,
                config.belief_mode,
                ActMode::Train { temperature: tau },
                Some(&reward),
                &mut act_rng,
            )
            .map_err(|e| e.context(format!("episode {episode}")))?;
            let episode_return: f64 = run.transitions.iter().map(|t| t.reward).sum();
            for t in &run.transitions {
                buffer.push(*t);
            }

            if diverged.is_none() && buffer.len() >= min_replay {
                for _ in 0..config.updates_per_episode {
                    let batch = buffer.sample(config.batch_size, &mut sample_rng);
                    let max_q = learner.update(&mut policy, &batch, config);
                    if !(max_q <= config.divergence_limit) {
                        log::warn!("divergence guard tripped at update {}: |Q| = {max_q}", learner.updates);
                        diverged = Some(Divergence {
                            episode,
                            update: learner.updates,
                            max_abs_q: max_q,
                        });
                        break;
                    }
                }
            }

            if schedule.automated {
                if let StageReward::Dense(stage) = stage_reward {
                    let trace = trace_of(&run.ledger, &run.outcome.ratios);
                    let (_, grad) =
                        curriculum_regret_loss(&trace, &stage, schedule.shape_exponent, schedule.smoothness, &ctx);
                    let mut s = stage;
                    regret_descent_step(&mut s, grad, schedule.regret_learning_rate);
                    relax[stage_idx] = s.roi_relax;
                }
            }

            let objective = indicator_reward(&run.ledger, &ctx);
            if window.len() == config.rolling_window {
                window.pop_front();
            }
            window.push_back((objective, run.outcome.feasible));
            let n = window.len() as f64;
            log.push(TrainLogEntry {
                episode,
                stage: stage_idx,
                temperature: tau,
                episode_return,
                objective,
                feasible: run.outcome.feasible,
                rolling_objective: window.iter().map(|w| w.0).sum::<f64>() / n,
                rolling_csr: window.iter().filter(|w| w.1).count() as f64 / n,
                roi_relax: matches!(stage_reward, StageReward::Dense(_)).then_some(relax[stage_idx]),
            });
            episode += 1;
        }
    }

    Ok(TrainOutput {
        policy,
        log,
        diagnostics: TrainDiagnostics {
            episodes: episode,
            updates: learner.updates,
            diverged,
            roi_relax: relax,
        },
    })
}

/// Greedy rollouts of `policy` on each day. Day `i` draws its regime
/// hypotheses from stream `i` of `seed`.
pub fn evaluate(
    policy: &QPolicy,
    instances: &[ProblemInstance],
    oracle_values: &[f64],
    belief_mode: BeliefMode,
    seed: u64,
) -> Result<Vec<DayOutcome>> {
    if instances.len() != oracle_values.len() {
        return Err(Error::InvalidArgument("need one oracle value per instance".into()));
    }
    instances
        .iter()
        .zip(oracle_values)
        .enumerate()
        .map(|(i, (inst, &dstar))| {
            let mut rng = rng_stream(seed, i as u64);
            play_day(policy, inst, dstar, belief_mode, ActMode::Eval, None, &mut rng)
                .map(|r| r.outcome)
                .map_err(|e| e.context(format!("evaluation day {i}")))
        })
        .collect()
}
