//! End-to-end experiment: fit baselines, train the agent through the
//! curriculum, evaluate everything on held-out and price-shifted days, and
//! write per-day and summary CSVs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmark::{bench_day, bench_days, shifted_market, BenchDay, Split};
use super::config::ExperimentConfig;
use super::metrics::{ans, andr, csr, write_day_results, DayResult};
use crate::agents::qlearn::TrainLogEntry;
use crate::agents::{
    evaluate, rollout, train, BeliefMode, Bidder, CemBidder, DayOutcome, FixedRatioBidder, PidBidder, PidGains,
    PolicyArtifact, QPolicy,
};
use crate::error::{Error, Result};
use crate::math::{mean, quantile};
use crate::oracle::solve_fixed_ratio;

/// Agent names used in the `agent` column.
pub const AGENT: &str = "bayes_q";
pub const AGENT_FROZEN: &str = "bayes_q_frozen";
pub const FIXED: &str = "fixed";
pub const PID: &str = "pid";
pub const CEM: &str = "cem";

pub const DAYS_CSV: &str = "days.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const ARTIFACT_JSON: &str = "policy.json";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";

/// One summary row: a metric of one agent on one split, aggregated over the
/// evaluation seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub split: String,
    pub agent: String,
    pub metric: String,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// The metric over all days of all seeds at once.
    pub pooled: f64,
    /// Seeds for which the metric was defined.
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub days: Vec<DayResult>,
    pub summary: Vec<SummaryRow>,
    pub artifact: PolicyArtifact,
    pub train_log: Vec<TrainLogEntry>,
    pub fixed_ratio: f64,
    pub pid_gains: PidGains,
}

/// `"{split}:{seed}:{index}"`.
pub fn day_id(split: Split, seed: usize, index: usize) -> String {
    format!("{}:{seed}:{index}", split.name())
}

/// Splits a day id into its split name and evaluation seed.
pub fn parse_day_id(id: &str) -> Option<(&str, usize)> {
    let mut it = id.split(':');
    let split = it.next()?;
    let seed = it.next()?.parse().ok()?;
    Some((split, seed))
}

pub fn day_result(id: String, day: &BenchDay, outcome: &DayOutcome, agent: &str, setting: super::Setting) -> DayResult {
    DayResult {
        day_id: id,
        setting,
        roi_limit: day.instance.roi_limit,
        budget: day.instance.budget,
        delivery: outcome.delivery,
        cost: outcome.cost,
        roi: outcome.roi,
        oracle_value: day.oracle_value(),
        feasible: outcome.feasible,
        agent: agent.to_string(),
    }
}

fn rollout_all(bidder: &mut dyn Bidder, days: &[BenchDay]) -> Result<Vec<DayOutcome>> {
    days.iter()
        .enumerate()
        .map(|(i, d)| rollout(bidder, &d.instance, d.oracle_value()).map_err(|e| e.context(format!("day {i}"))))
        .collect()
}

fn mean_score(days: &[BenchDay], outcomes: &[DayOutcome]) -> f64 {
    let scores: Vec<f64> = days
        .iter()
        .zip(outcomes)
        .map(|(d, o)| super::day_score(o.delivery, d.oracle_value(), o.feasible))
        .collect();
    mean(&scores)
}

/// Picks the PID gain multiplier with the best mean score on `days`.
/// Ties go to the earlier multiplier.
pub fn fit_pid(base: &PidGains, scales: &[f64], days: &[BenchDay]) -> Result<PidGains> {
    let mut best = (f64::NEG_INFINITY, *base);
    for &s in scales {
        let gains = base.scaled(s);
        let score = mean_score(days, &rollout_all(&mut PidBidder::new(gains), days)?);
        if score > best.0 {
            best = (score, gains);
        }
    }
    Ok(best.1)
}

/// Evaluates every agent on one day set.
fn evaluate_split(
    config: &ExperimentConfig,
    policy: &QPolicy,
    fixed_ratio: f64,
    pid: PidGains,
    split: Split,
    eval_seed: usize,
    days: &[BenchDay],
) -> Result<Vec<DayResult>> {
    let setting = config.constraints.setting;
    let instances: Vec<_> = days.iter().map(|d| d.instance.clone()).collect();
    let values: Vec<f64> = days.iter().map(BenchDay::oracle_value).collect();
    let sample_seed = config.seed ^ ((eval_seed as u64) << 20) ^ split as u64;
    let mut runs: Vec<(&str, Vec<DayOutcome>)> = vec![
        (AGENT, evaluate(policy, &instances, &values, BeliefMode::Posterior, sample_seed)?),
        (AGENT_FROZEN, evaluate(policy, &instances, &values, BeliefMode::FrozenUniform, sample_seed)?),
        (FIXED, rollout_all(&mut FixedRatioBidder { ratio: fixed_ratio }, days)?),
        (PID, rollout_all(&mut PidBidder::new(pid), days)?),
    ];
    let mut cem = CemBidder::new(config.baselines.cem, sample_seed);
    runs.push((CEM, rollout_all(&mut cem, days)?));
    let mut out = Vec::with_capacity(runs.len() * days.len());
    for (agent, outcomes) in runs {
        for (i, (day, o)) in days.iter().zip(&outcomes).enumerate() {
            out.push(day_result(day_id(split, eval_seed, i), day, o, agent, setting));
        }
    }
    Ok(out)
}

fn quartiles(xs: &[f64]) -> (f64, f64, f64, f64) {
    (mean(xs), quantile(xs, 0.5), quantile(xs, 0.25), quantile(xs, 0.75))
}

/// Per-seed metrics of every `(split, agent)` pair, summarized.
pub fn summarize(days: &[DayResult]) -> Result<Vec<SummaryRow>> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for d in days {
        let (split, _) = parse_day_id(&d.day_id)
            .ok_or_else(|| Error::InvalidArgument(format!("malformed day id {:?}", d.day_id)))?;
        let key = (split.to_string(), d.agent.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows = Vec::new();
    for (split, agent) in keys {
        let group: Vec<&DayResult> = days
            .iter()
            .filter(|d| d.agent == agent && parse_day_id(&d.day_id).is_some_and(|(s, _)| s == split))
            .collect();
        let mut seeds: Vec<usize> = group.iter().filter_map(|d| parse_day_id(&d.day_id).map(|x| x.1)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let per_seed: Vec<Vec<DayResult>> = seeds
            .iter()
            .map(|&s| {
                group
                    .iter()
                    .filter(|d| parse_day_id(&d.day_id).is_some_and(|x| x.1 == s))
                    .map(|d| (*d).clone())
                    .collect()
            })
            .collect();
        let all: Vec<DayResult> = group.iter().map(|d| (*d).clone()).collect();
        type MetricFn = fn(&[DayResult]) -> Result<f64>;
        let metrics: [(&str, MetricFn); 3] = [("ans", ans), ("csr", csr), ("andr", andr)];
        for (name, f) in metrics {
            let values: Vec<f64> = per_seed.iter().filter_map(|r| f(r).ok()).collect();
            let Ok(pooled) = f(&all) else { continue };
            let (m, med, q1, q3) = quartiles(&values);
            rows.push(SummaryRow {
                split: split.clone(),
                agent: agent.clone(),
                metric: name.to_string(),
                mean: m,
                median: med,
                q1,
                q3,
                pooled,
                seeds: values.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_train_log(path: impl AsRef<Path>, log: &[TrainLogEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in log {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the whole experiment without touching the filesystem.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let market = &config.market;
    let cons = &config.constraints;
    let setup = config.oracle.setup()?;
    let ev = &config.evaluation;

    let fit_days = bench_days(market, cons, &setup, Split::Baseline, config.seed, ev.baseline_days)?;
    let instances: Vec<_> = fit_days.iter().map(|d| d.instance.clone()).collect();
    let values: Vec<f64> = fit_days.iter().map(BenchDay::oracle_value).collect();
    let fixed_ratio = solve_fixed_ratio(&instances, &values, &setup.grid)
        .map_err(|e| e.context("fitting the fixed-ratio baseline"))?
        .ratio;
    let pid = fit_pid(&config.baselines.pid, &config.baselines.pid_gain_scales, &fit_days)
        .map_err(|e| e.context("fitting the PID baseline"))?;

    let mut source = |episode: usize| {
        let d = bench_day(market, cons, &setup, Split::Train, config.seed, episode)?;
        let v = d.oracle_value();
        Ok((d.instance, v))
    };
    let trained = train(market, &config.curriculum, &config.agent, &mut source, config.seed)
        .map_err(|e| e.context("training"))?;
    let artifact =
        PolicyArtifact::from_policy(&trained.policy, &config.curriculum, &trained.diagnostics, &config.agent, config.seed);

    let shifted = if ev.shifted_days > 0 {
        Some(shifted_market(market, ev.shifted_offset)?)
    } else {
        None
    };
    let mut days = Vec::new();
    for e in 0..ev.eval_seeds {
        let eval_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(e as u64);
        let test = bench_days(market, cons, &setup, Split::Test, eval_seed, ev.test_days)?;
        days.extend(
            evaluate_split(config, &trained.policy, fixed_ratio, pid, Split::Test, e, &test)
                .map_err(|err| err.context(format!("evaluating test seed {e}")))?,
        );
        if let Some(m) = &shifted {
            let sh = bench_days(m, cons, &setup, Split::Shifted, eval_seed, ev.shifted_days)?;
            days.extend(
                evaluate_split(config, &trained.policy, fixed_ratio, pid, Split::Shifted, e, &sh)
                    .map_err(|err| err.context(format!("evaluating shifted seed {e}")))?,
            );
        }
    }
    let summary = summarize(&days)?;
    Ok(ExperimentReport {
        days,
        summary,
        artifact,
        train_log: trained.log,
        fixed_ratio,
        pid_gains: pid,
    })
}

/// Runs the experiment and writes `days.csv`, `summary.csv`, `policy.json`
/// and `train_log.csv` into the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = run_in_memory(config)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    write_day_results(dir.join(DAYS_CSV), &report.days)?;
    write_summary(dir.join(SUMMARY_CSV), &report.summary)?;
    report.artifact.save(dir.join(ARTIFACT_JSON))?;
    write_train_log(dir.join(TRAIN_LOG_CSV), &report.train_log)?;
    Ok(report)
}
