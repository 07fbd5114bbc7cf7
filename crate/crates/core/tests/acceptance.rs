//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default. Criterion numbers given as arguments
//! (`cargo test --test acceptance -- 1 7`) select a subset.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roibid::agents::{
    evaluate, rollout, train, AgentConfig, BeliefMode, FixedRatioBidder, QPolicy, TrainOutput,
};
use roibid::agents::replay::Transition;
use roibid::belief::{elbo_loss, gaussian_kl, init_belief, update_belief};
use roibid::env::{feasibility_of, replay, Env, CLIP_RANGES, OBS_DIM};
use roibid::harness::benchmark::{bench_day_with_trace, bench_days, Constraints, OracleSetup, Split};
use roibid::harness::experiment::run_in_memory;
use roibid::harness::{ans, andr, csr, day_score, paired_t_test, run_experiment, DayResult, ExperimentConfig, Setting};
use roibid::market::{generate_day, Impression, MarketConfig, ProblemInstance};
use roibid::oracle::{brute_force_oracle, solve_fixed_ratio, solve_slotwise_oracle_with, OracleOptions, RatioGrid};
use roibid::rewards::{
    curriculum_limits, curriculum_regret_loss, indicator_reward, CurriculumSchedule, DenseStage, RewardContext,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Delivery and cost of a ratio plan, recomputed auction by auction.
fn exact_plan_value(instance: &ProblemInstance, ratios: &[f64]) -> (f64, f64) {
    let (mut d, mut c) = (0.0, 0.0);
    for (slot, &beta) in instance.slots.iter().zip(ratios) {
        for imp in slot {
            let (delivery, price) = imp.reveal();
            if beta * imp.utility() > price {
                d += delivery;
                c += price;
            }
        }
    }
    (d, c)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let eighth = |k: u32| k as f64 / 8.0;
    let opts = OracleOptions {
        weight_step: Some(1.0 / 16.0),
        ..OracleOptions::default()
    };
    let mut budgeted = 0;
    for case in 0..200 {
        let slots = rng.random_range(1..=4);
        let mut values: Vec<f64> = vec![0.0];
        let size = rng.random_range(2..=6);
        while values.len() < size {
            let v = rng.random_range(1..=16) as f64 / 4.0;
            if !values.contains(&v) {
                values.push(v);
            }
        }
        values.sort_by(f64::total_cmp);
        let grid = RatioGrid::new(values).map_err(|e| e.to_string())?;
        let count = rng.random_range(0..=40);
        let imps: Vec<Impression> = (0..count)
            .map(|_| {
                Impression::new(
                    rng.random_range(0..slots),
                    eighth(rng.random_range(1..=16)),
                    eighth(rng.random_range(0..=24)),
                    eighth(rng.random_range(1..=24)),
                )
                .unwrap()
            })
            .collect();
        let l = [0.5, 0.75, 1.0, 1.25, 1.5][rng.random_range(0..5)];
        let b = if rng.random_bool(0.5) {
            budgeted += 1;
            eighth(rng.random_range(0..=40))
        } else {
            f64::INFINITY
        };
        let inst = ProblemInstance::from_impressions(slots, imps, l, b, 1, vec![]).map_err(|e| e.to_string())?;
        let dp = solve_slotwise_oracle_with(&inst, &grid, &opts);
        let brute = brute_force_oracle(&inst, &grid).map_err(|e| e.to_string())?;
        ensure(dp.delivery == brute.delivery, || {
            format!("case {case}: DP {} vs brute force {}", dp.delivery, brute.delivery)
        })?;
        for plan in [&dp, &brute] {
            let (d, c) = exact_plan_value(&inst, &plan.ratios);
            ensure(d == plan.delivery && c == plan.cost, || format!("case {case}: plan value mismatch"))?;
            ensure(feasibility_of(d, c, l, b).both, || format!("case {case}: infeasible plan D={d} C={c}"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!("200 instances ({budgeted} budgeted), DP = brute force, {secs:.2}s"))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut market = MarketConfig::two_regime_default();
    market.slots_per_day = 6;
    for r in &mut market.regimes {
        r.arrival_rate = 8.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut min_feasible, mut max_infeasible) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n, mut n_feasible, mut violations, mut seed) = (0, 0, 0, 0u64);
    while n < 10_000 {
        seed += 1;
        let l = rng.random_range(0.5..2.0);
        let b = if rng.random_bool(0.5) { rng.random_range(0.5..20.0) } else { f64::INFINITY };
        let inst = generate_day(&market, (l, b), seed).map_err(|e| e.to_string())?;
        let ratios: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..4.0)).collect();
        let dstar = rng.random_range(0.5..30.0);
        let (ledger, _) = replay(&inst, dstar, &ratios).map_err(|e| e.to_string())?;
        if ledger.wins == 0 {
            continue;
        }
        n += 1;
        let r = indicator_reward(&ledger, &RewardContext::new(l, b, dstar, 6));
        if feasibility_of(ledger.cumulative_delivery, ledger.cumulative_cost, l, b).both {
            n_feasible += 1;
            min_feasible = min_feasible.min(r);
            violations += usize::from(!(r > 0.0));
        } else {
            max_infeasible = max_infeasible.max(r);
            violations += usize::from(!(r <= 0.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(n_feasible > 0 && n_feasible < n, || "fuzzing produced only one class".into())?;
    ensure(violations == 0 && min_feasible > 0.0 && 0.0 >= max_infeasible, || {
        format!("{violations} violations, min feasible {min_feasible}, max infeasible {max_infeasible}")
    })?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{n} episodes ({n_feasible} feasible), min feasible {min_feasible:.3e} > 0 >= max infeasible {max_infeasible:.3e}, {secs:.2}s"
    ))
}

fn criterion_3() -> Check {
    let schedule = CurriculumSchedule::default();
    for (l, b) in [(1.0, f64::INFINITY), (1.3, 250.0), (0.8, 1.0)] {
        for spec in &schedule.stages {
            let stage = DenseStage {
                roi_relax: spec.roi_relax,
                budget_reserve: spec.budget_reserve,
            };
            for slots in [1, 7, 48] {
                let (l_t, b_t) = curriculum_limits(slots, slots, &stage, schedule.shape_exponent, l, b);
                ensure(l_t == l && b_t == 0.0, || format!("T={slots}: limits at T are ({l_t}, {b_t})"))?;
            }
        }
    }
    let stage = DenseStage {
        roi_relax: 0.2,
        budget_reserve: 0.95,
    };
    let eps = f64::EPSILON;
    let (l0, _) = curriculum_limits(0, 48, &stage, 3.0, 1.0, f64::INFINITY);
    let (lh, _) = curriculum_limits(24, 48, &stage, 3.0, 1.0, f64::INFINITY);
    ensure((l0 - 0.8).abs() <= eps && (lh - 0.975).abs() <= eps, || format!("L_0 = {l0}, L_T/2 = {lh}"))?;
    Ok(format!("L_T = L and B_T = 0 for all stages; L_0 = {l0}, L_T/2 = {lh}"))
}

fn criterion_4() -> Check {
    let market = MarketConfig::two_regime_default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut checked, mut worst, mut seed) = (0, 0.0_f64, 0u64);
    while checked < 50 {
        seed += 1;
        let (l, b) = if rng.random_bool(0.5) { (1.0, f64::INFINITY) } else { (rng.random_range(0.8..1.5), 1e4) };
        let inst = generate_day(&market, (l, b), seed).map_err(|e| e.to_string())?;
        let base: f64 = rng.random_range(0.5..1.5);
        let ratios: Vec<f64> = (0..48).map(|_| (base + rng.random_range(-0.3..0.3_f64)).clamp(0.0, 4.0)).collect();
        let (ledger, trace) = replay(&inst, 1.0, &ratios).map_err(|e| e.to_string())?;
        if !feasibility_of(ledger.cumulative_delivery, ledger.cumulative_cost, l, b).both || ledger.wins == 0 {
            continue;
        }
        let dstar = ledger.cumulative_delivery * rng.random_range(1.0..1.5);
        let ctx = RewardContext::new(l, b, dstar, 48);
        let v = rng.random_range(0.5..3.0);
        let relax = rng.random_range(0.05..0.5);
        let stage = |r: f64| DenseStage {
            roi_relax: r,
            budget_reserve: 0.95,
        };
        let (_, analytic) = curriculum_regret_loss(&trace, &stage(relax), 3.0, v, &ctx);
        let h = 1e-6;
        let up = curriculum_regret_loss(&trace, &stage(relax + h), 3.0, v, &ctx).0;
        let down = curriculum_regret_loss(&trace, &stage(relax - h), 3.0, v, &ctx).0;
        let fd = (up - down) / (2.0 * h);
        ensure(analytic != 0.0, || format!("episode {seed}: zero gradient"))?;
        let e = rel_err(analytic, fd);
        ensure(e < 1e-4, || format!("episode {seed}: analytic {analytic} vs FD {fd} (rel {e:.2e})"))?;
        worst = worst.max(e);
        checked += 1;
    }
    Ok(format!("50 feasible episodes, worst relative error {worst:.2e}"))
}

fn criterion_5() -> Check {
    let kl = |m: f64, s: f64| gaussian_kl(&[m], &[s]).map_err(|e| e.to_string());
    let (a, b, c) = (kl(0.0, 1.0)?, kl(1.0, 1.0)?, kl(0.0, 2.0)?);
    ensure(a == 0.0, || format!("KL(0,1) = {a}"))?;
    ensure((b - 0.5).abs() < 1e-12, || format!("KL(1,1) = {b}"))?;
    ensure((c - 0.806_853).abs() <= 1e-6, || format!("KL(0,2) = {c}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..100 {
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..3.0)).collect();
        let res: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..4.0)).collect();
        let joint = gaussian_kl(&mu, &sigma).map_err(|e| e.to_string())?;
        let parts: f64 = (0..3).map(|i| kl(mu[i], sigma[i])).sum::<Result<f64, String>>()?;
        ensure((joint - parts).abs() <= 1e-12 * joint.max(1.0), || "KL is not additive over dimensions".into())?;
        let elbo = elbo_loss(&res, &mu, &sigma).map_err(|e| e.to_string())?;
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        ensure((elbo - (mean + joint)).abs() <= 1e-12 * elbo.max(1.0), || "ELBO != residual + KL".into())?;
    }
    Ok(format!("KL(0,1)={a}, KL(1,1)={b}, KL(0,2)={c:.6}; additivity holds on 100 draws"))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let market = MarketConfig::two_regime_default();
    let mut hits = 0;
    for day in 0..100u64 {
        let inst = generate_day(&market, (1.0, f64::INFINITY), 6000 + day).map_err(|e| e.to_string())?;
        let (mut env, _) = Env::reset(&inst, 1.0).map_err(|e| e.to_string())?;
        let mut belief = init_belief(2).map_err(|e| e.to_string())?;
        let mut concentrated = false;
        for t in 0..5 {
            let step = env.step(1.0).map_err(|e| e.to_string())?;
            belief = update_belief(&belief, &step.summary.evidence, &market.regimes, &market.transition_matrix)
                .map_err(|e| e.to_string())?
                .belief;
            if belief.probs()[inst.regime_trace[t]] > 0.95 {
                concentrated = true;
                break;
            }
        }
        hits += usize::from(concentrated);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(hits >= 95, || format!("only {hits}/100 days concentrated within 5 slots"))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{hits}/100 days put > 0.95 on the true regime within 5 slots, {secs:.2}s"))
}

fn criterion_7() -> Check {
    let market = MarketConfig::two_regime_default();
    let mut worst = 0.0_f64;
    for point in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + point);
        let mut policy = QPolicy::new(market.clone(), RatioGrid::default(), &[64, 64], &mut rng);
        // move targets away from the online copies
        let mut shaken = policy.target[0].to_flat();
        shaken.iter_mut().for_each(|w| *w += rng.random_range(-0.05..0.05));
        policy.target[0].set_flat(&shaken);
        let batch: Vec<Transition> = (0..8)
            .map(|_| {
                let obs = |rng: &mut ChaCha8Rng| -> [f64; OBS_DIM] {
                    std::array::from_fn(|i| rng.random_range(CLIP_RANGES[i].0..=CLIP_RANGES[i].1))
                };
                Transition {
                    obs: obs(&mut rng),
                    z: rng.random_range(0..2),
                    action: rng.random_range(0..41),
                    reward: rng.random_range(-1.0..1.0),
                    next_obs: obs(&mut rng),
                    next_z: rng.random_range(0..2),
                    done: rng.random_bool(0.2),
                }
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = policy.td_targets(&refs, 1.0);
        let net = (point % 2) as usize;
        let (_, grads) = policy.td_loss_and_grads(net, &refs, &targets);
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.w.iter().chain(g.b.iter()).copied().collect::<Vec<_>>()).collect();
        let theta = policy.online[net].to_flat();
        let h = 1e-5;
        let mut fd = Vec::with_capacity(theta.len());
        let mut probe = policy.clone();
        let mut params = theta.clone();
        for i in 0..theta.len() {
            params[i] = theta[i] + h;
            probe.online[net].set_flat(&params);
            let up = probe.td_loss_and_grads(net, &refs, &targets).0;
            params[i] = theta[i] - h;
            probe.online[net].set_flat(&params);
            let down = probe.td_loss_and_grads(net, &refs, &targets).0;
            params[i] = theta[i];
            fd.push((up - down) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        let e = diff / na.max(nf);
        ensure(na > 0.0 && e < 1e-4, || format!("point {point}: relative error {e:.2e} (|g| = {na:.3e})"))?;
        worst = worst.max(e);
    }
    Ok(format!("10 parameter points, worst relative error {worst:.2e}"))
}

/// Episodes per curriculum epoch in the learning criteria: 3 + 3 + 3 epochs
/// of 150 episodes stay within the 1500-episode allowance.
const EPISODES_PER_EPOCH: usize = 150;
const TRAIN_SEED: u64 = 1;

struct Trained {
    output: TrainOutput,
    secs: f64,
}

fn agent_config() -> AgentConfig {
    AgentConfig {
        episodes_per_epoch: EPISODES_PER_EPOCH,
        temperature_start: 0.2,
        ..AgentConfig::default()
    }
}

fn trained_agent() -> &'static Result<Trained, String> {
    static AGENT: OnceLock<Result<Trained, String>> = OnceLock::new();
    AGENT.get_or_init(|| {
        let market = MarketConfig::two_regime_default();
        let cons = Constraints::single(1.0);
        let setup = OracleSetup::default();
        let start = Instant::now();
        let mut days = |ep: usize| {
            let d = roibid::harness::benchmark::bench_day(&market, &cons, &setup, Split::Train, TRAIN_SEED, ep)?;
            Ok((d.instance, d.oracle.delivery))
        };
        let output = train(&market, &CurriculumSchedule::default(), &agent_config(), &mut days, TRAIN_SEED)
            .map_err(|e| e.to_string())?;
        Ok(Trained {
            output,
            secs: start.elapsed().as_secs_f64(),
        })
    })
}

fn scores(outcomes: &[roibid::agents::DayOutcome], values: &[f64]) -> Vec<f64> {
    outcomes.iter().zip(values).map(|(o, &v)| day_score(o.delivery, v, o.feasible)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_8() -> Check {
    let trained = trained_agent().as_ref().map_err(Clone::clone)?;
    let episodes = trained.output.diagnostics.episodes;
    ensure(episodes <= 1500, || format!("{episodes} training episodes"))?;
    let market = MarketConfig::two_regime_default();
    let cons = Constraints::single(1.0);
    let setup = OracleSetup::default();
    let fit = bench_days(&market, &cons, &setup, Split::Baseline, 0, 100).map_err(|e| e.to_string())?;
    let fit_inst: Vec<_> = fit.iter().map(|d| d.instance.clone()).collect();
    let fit_vals: Vec<f64> = fit.iter().map(|d| d.oracle_value()).collect();
    let rm = solve_fixed_ratio(&fit_inst, &fit_vals, &setup.grid).map_err(|e| e.to_string())?;

    let test = bench_days(&market, &cons, &setup, Split::Test, 0, 100).map_err(|e| e.to_string())?;
    let inst: Vec<_> = test.iter().map(|d| d.instance.clone()).collect();
    let vals: Vec<f64> = test.iter().map(|d| d.oracle_value()).collect();
    let agent = evaluate(&trained.output.policy, &inst, &vals, BeliefMode::Posterior, 0).map_err(|e| e.to_string())?;
    let mut bidder = FixedRatioBidder { ratio: rm.ratio };
    let fixed: Vec<_> = inst
        .iter()
        .zip(&vals)
        .map(|(i, &v)| rollout(&mut bidder, i, v))
        .collect::<roibid::Result<_>>()
        .map_err(|e| e.to_string())?;
    let (sa, sf) = (scores(&agent, &vals), scores(&fixed, &vals));
    let csr_agent = agent.iter().filter(|o| o.feasible).count() as f64 / agent.len() as f64;
    let test = paired_t_test(&sa, &sf);
    let detail = format!(
        "{episodes} episodes in {:.0}s; agent ANS {:.4} CSR {csr_agent:.2} vs RM(beta={}) ANS {:.4}, p = {:.3e}",
        trained.secs,
        mean(&sa),
        rm.ratio,
        mean(&sf),
        test.p_value
    );
    ensure(csr_agent >= 0.90 && mean(&sa) > mean(&sf) && test.p_value < 0.05, || detail.clone())?;
    Ok(detail)
}

fn criterion_9() -> Check {
    let trained = trained_agent().as_ref().map_err(Clone::clone)?;
    let market = MarketConfig::two_regime_default();
    let cons = Constraints::single(1.0);
    let setup = OracleSetup::default();
    let days: Vec<_> = (0..100)
        .map(|i| {
            let first = i % 2;
            let switch = 12 + (i * 7) % 25;
            let trace: Vec<usize> = (0..48).map(|t| if t < switch { first } else { 1 - first }).collect();
            bench_day_with_trace(&market, &cons, &setup, trace, Split::Test, 900, i)
        })
        .collect::<roibid::Result<_>>()
        .map_err(|e| e.to_string())?;
    let inst: Vec<_> = days.iter().map(|d| d.instance.clone()).collect();
    let vals: Vec<f64> = days.iter().map(|d| d.oracle_value()).collect();
    let policy = &trained.output.policy;
    let post = evaluate(policy, &inst, &vals, BeliefMode::Posterior, 0).map_err(|e| e.to_string())?;
    let frozen = evaluate(policy, &inst, &vals, BeliefMode::FrozenUniform, 0).map_err(|e| e.to_string())?;
    let (sp, sf) = (scores(&post, &vals), scores(&frozen, &vals));
    let test = paired_t_test(&sp, &sf);
    let detail = format!(
        "mid-day switch days: posterior ANS {:.4} vs frozen-uniform ANS {:.4}, p = {:.3e}",
        mean(&sp),
        mean(&sf),
        test.p_value
    );
    ensure(mean(&sp) > mean(&sf) && test.p_value < 0.05, || detail.clone())?;
    Ok(detail)
}

fn criterion_10() -> Check {
    let market = MarketConfig::two_regime_default();
    let cons = Constraints::single(1.0);
    let setup = OracleSetup::default();
    let full = CurriculumSchedule::default();
    let stage_epochs = full.stages[0].epochs;
    let config = AgentConfig {
        temperature_anneal_episodes: Some((full.stages[0].epochs + full.stages[1].epochs) * EPISODES_PER_EPOCH),
        ..agent_config()
    };
    let dense = CurriculumSchedule {
        stages: vec![full.stages[0]],
        final_stage_is_sparse: false,
        ..full.clone()
    };
    let sparse = CurriculumSchedule::sparse_only(stage_epochs);
    let start = Instant::now();
    let mut gaps = Vec::new();
    let (mut dense_sum, mut sparse_sum) = (0.0, 0.0);
    for seed in 0..5u64 {
        let run = |schedule: &CurriculumSchedule| -> Result<f64, String> {
            let mut days = |ep: usize| {
                let d = roibid::harness::benchmark::bench_day(&market, &cons, &setup, Split::Train, 50 + seed, ep)?;
                Ok((d.instance, d.oracle.delivery))
            };
            let out = train(&market, schedule, &config, &mut days, 50 + seed).map_err(|e| e.to_string())?;
            Ok(out.log.last().map_or(f64::NAN, |e| e.rolling_objective))
        };
        let (d, s) = (run(&dense)?, run(&sparse)?);
        dense_sum += d;
        sparse_sum += s;
        gaps.push(format!("{:+.3}", d - s));
    }
    let (d, s) = (dense_sum / 5.0, sparse_sum / 5.0);
    let detail = format!(
        "rolling objective after {} episodes: dense {d:.4} vs sparse-only {s:.4} (per-seed gaps {}), {:.0}s",
        stage_epochs * EPISODES_PER_EPOCH,
        gaps.join(" "),
        start.elapsed().as_secs_f64()
    );
    ensure(d > s, || detail.clone())?;
    Ok(detail)
}

fn result(d: f64, dstar: f64, feasible: bool) -> DayResult {
    DayResult {
        day_id: String::new(),
        setting: Setting::SC,
        roi_limit: 1.0,
        budget: f64::INFINITY,
        delivery: d,
        cost: 0.0,
        roi: None,
        oracle_value: dstar,
        feasible,
        agent: "a".into(),
    }
}

fn criterion_11() -> Check {
    let hand = [result(8.0, 10.0, true), result(5.0, 10.0, false), result(6.0, 6.0, true)];
    let (a, c, r) = (ans(&hand).unwrap(), csr(&hand).unwrap(), andr(&hand).unwrap());
    ensure((a - 0.6).abs() < 1e-12 && (c - 2.0 / 3.0).abs() < 1e-12 && (r + 10.0).abs() < 1e-9, || {
        format!("hand example gives ANS {a}, CSR {c}, ANDR {r}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut sets: Vec<Vec<DayResult>> = (0..500)
        .map(|_| {
            let n = rng.random_range(1..30);
            (0..n)
                .map(|_| {
                    let dstar = rng.random_range(0.1..50.0);
                    result(dstar * rng.random_range(0.0..=1.0), dstar, rng.random_bool(0.7))
                })
                .collect()
        })
        .collect();
    let report = run_in_memory(&ExperimentConfig::smoke()).map_err(|e| e.to_string())?;
    let mut agents: Vec<&str> = report.days.iter().map(|d| d.agent.as_str()).collect();
    agents.dedup();
    agents.sort();
    agents.dedup();
    for agent in agents {
        sets.push(report.days.iter().filter(|d| d.agent == agent).cloned().collect());
    }
    for set in &sets {
        let (a, c) = (ans(set).unwrap(), csr(set).unwrap());
        ensure(a <= c, || format!("ANS {a} > CSR {c}"))?;
        if let Ok(r) = andr(set) {
            ensure((a - c * (1.0 + r / 100.0)).abs() <= 1e-9, || format!("ANS {a} != CSR*(1+ANDR/100) with ANDR {r}"))?;
        } else {
            ensure(a == 0.0, || "ANS nonzero without feasible days".into())?;
        }
    }
    Ok(format!("hand example exact; identities hold on {} result sets", sets.len()))
}

fn criterion_12() -> Check {
    let run = || -> Result<tempfile::TempDir, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = ExperimentConfig::smoke();
        cfg.output_dir = dir.path().to_path_buf();
        run_experiment(&cfg).map_err(|e| e.to_string())?;
        Ok(dir)
    };
    let (a, b) = (run()?, run()?);
    let mut bytes = 0;
    for f in ["days.csv", "summary.csv", "train_log.csv", "policy.json"] {
        let x = std::fs::read(a.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs between runs"))?;
        bytes += x.len();
    }
    Ok(format!("two smoke runs byte-identical ({bytes} bytes over 4 files)"))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Check); 12] = [
        (1, "oracle correctness", criterion_1),
        (2, "hard-barrier ordering", criterion_2),
        (3, "curriculum schedule", criterion_3),
        (4, "automated-curriculum gradient", criterion_4),
        (5, "Gaussian KL / ELBO", criterion_5),
        (6, "belief filter concentration", criterion_6),
        (7, "TD-loss gradient check", criterion_7),
        (8, "learning efficacy vs fixed ratio", criterion_8),
        (9, "Bayesian ablation", criterion_9),
        (10, "curriculum ablation", criterion_10),
        (11, "metric identities", criterion_11),
        (12, "end-to-end determinism", criterion_12),
    ];
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    // A name filter meant for other test targets runs nothing here.
    if selected.is_empty() && args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
