//! `roibid` command-line interface.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for bad
//! input data, 1 for anything else.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use roibid::agents::{
    evaluate, rollout, train, BeliefMode, Bidder, CemBidder, DayOutcome, FixedRatioBidder, PidBidder, PolicyArtifact,
};
use roibid::harness::benchmark::{bench_day, BenchDay, Split};
use roibid::harness::experiment::{day_result, fit_pid, run_experiment};
use roibid::harness::io::{read_day_dir, read_oracle_records, write_day_dir, write_oracle_records, OracleRecord};
use roibid::harness::metrics::{metrics, read_day_results, write_day_results, DayResult};
use roibid::harness::{ExperimentConfig, Setting};
use roibid::oracle::{solve_fixed_ratio, solve_slotwise_oracle_with, OracleOptions, RatioGrid};
use roibid::{Error, Result};

#[derive(Parser)]
#[command(name = "roibid", version, about = "ROI-constrained bidding: simulate, solve, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate market days from an experiment config.
    GenMarket {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the slot-wise oracle for every day of a data directory.
    Oracle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the agent and write its policy artifact.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy artifact on a data directory.
    Eval {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Oracle records to normalize by; solved on the fly if absent.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feed the policy a uniform belief that never updates.
        #[arg(long)]
        frozen_belief: bool,
    },
    /// Run a baseline bidder on a data directory.
    Baseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Days the fixed ratio and PID gains are fitted on; defaults to `--data`.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
        /// Experiment config supplying baseline settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print ANS, CSR and ANDR of a per-day CSV, per agent.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run a full experiment and write its CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Pid,
    Cem,
    Fixed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Context { source, .. } => exit_code(source),
        e if e.is_data_error() => 3,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn setting_of(budget: f64) -> Setting {
    if budget.is_finite() {
        Setting::MC
    } else {
        Setting::SC
    }
}

fn grid(step: f64) -> Result<RatioGrid> {
    RatioGrid::uniform(step).map_err(|e| Error::Config(e.to_string()))
}

/// Days of `dir` with oracle plans, either read from `oracle` or solved.
fn load_days(dir: &Path, oracle: Option<&Path>, grid_step: f64) -> Result<Vec<(String, BenchDay)>> {
    let g = grid(grid_step)?;
    let days = read_day_dir(dir)?;
    let records: Option<HashMap<String, OracleRecord>> = match oracle {
        Some(p) => Some(read_oracle_records(p)?.into_iter().map(|r| (r.day.clone(), r)).collect()),
        None => None,
    };
    days.into_iter()
        .map(|(name, instance)| {
            let plan = match &records {
                Some(map) => {
                    let r = map.get(&name).ok_or_else(|| Error::Format {
                        path: oracle.unwrap_or(dir).to_path_buf(),
                        msg: format!("no oracle record for {name}"),
                    })?;
                    roibid::oracle::OraclePlan {
                        ratios: r.betas.clone(),
                        indices: Vec::new(),
                        delivery: r.oracle_value,
                        cost: r.oracle_cost,
                    }
                }
                None => solve_slotwise_oracle_with(&instance, &g, &OracleOptions::default()),
            };
            Ok((name, BenchDay { instance, oracle: plan }))
        })
        .collect()
}

fn results(days: &[(String, BenchDay)], outcomes: &[DayOutcome], agent: &str) -> Vec<DayResult> {
    days.iter()
        .zip(outcomes)
        .map(|((name, d), o)| day_result(name.clone(), d, o, agent, setting_of(d.instance.budget)))
        .collect()
}

fn run_bidder(bidder: &mut dyn Bidder, days: &[(String, BenchDay)]) -> Result<Vec<DayOutcome>> {
    days.iter()
        .map(|(name, d)| rollout(bidder, &d.instance, d.oracle_value()).map_err(|e| e.context(name.clone())))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMarket { config, days, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = cfg.oracle.setup()?;
            let generated: Vec<_> = (0..days)
                .map(|i| bench_day(&cfg.market, &cfg.constraints, &setup, Split::Test, seed, i).map(|d| d.instance))
                .collect::<Result<_>>()?;
            write_day_dir(&out, &generated)?;
            println!("wrote {days} days to {}", out.display());
        }
        Command::Oracle { data, grid_step, out } => {
            let days = load_days(&data, None, grid_step)?;
            let records: Vec<_> = days.iter().map(|(n, d)| OracleRecord::new(n.clone(), &d.oracle)).collect();
            write_oracle_records(&out, &records)?;
            println!("solved {} days", records.len());
        }
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = cfg.oracle.setup()?;
            let mut source = |episode: usize| {
                let d = bench_day(&cfg.market, &cfg.constraints, &setup, Split::Train, cfg.seed, episode)?;
                let v = d.oracle_value();
                Ok((d.instance, v))
            };
            let trained = train(&cfg.market, &cfg.curriculum, &cfg.agent, &mut source, cfg.seed)?;
            if let Some(d) = trained.diagnostics.diverged {
                eprintln!("warning: divergence guard tripped at update {} (|Q| = {})", d.update, d.max_abs_q);
            }
            PolicyArtifact::from_policy(&trained.policy, &cfg.curriculum, &trained.diagnostics, &cfg.agent, cfg.seed)
                .save(&out)?;
            println!("trained {} episodes, {} updates", trained.diagnostics.episodes, trained.diagnostics.updates);
        }
        Command::Eval {
            artifact,
            data,
            out,
            oracle,
            grid_step,
            seed,
            frozen_belief,
        } => {
            let policy = PolicyArtifact::load(&artifact)?.to_policy()?;
            let days = load_days(&data, oracle.as_deref(), grid_step)?;
            let instances: Vec<_> = days.iter().map(|(_, d)| d.instance.clone()).collect();
            let values: Vec<f64> = days.iter().map(|(_, d)| d.oracle_value()).collect();
            let (mode, name) = if frozen_belief {
                (BeliefMode::FrozenUniform, "bayes_q_frozen")
            } else {
                (BeliefMode::Posterior, "bayes_q")
            };
            let outcomes = evaluate(&policy, &instances, &values, mode, seed)?;
            write_day_results(&out, &results(&days, &outcomes, name))?;
        }
        Command::Baseline {
            kind,
            data,
            out,
            train,
            oracle,
            grid_step,
            config,
            seed,
        } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let days = load_days(&data, oracle.as_deref(), grid_step)?;
            let fit = || -> Result<Vec<BenchDay>> {
                let src = train.as_deref().unwrap_or(&data);
                let o = if train.is_some() { None } else { oracle.as_deref() };
                Ok(load_days(src, o, grid_step)?.into_iter().map(|(_, d)| d).collect())
            };
            let (outcomes, name) = match kind {
                BaselineKind::Fixed => {
                    let fit_days = fit()?;
                    let inst: Vec<_> = fit_days.iter().map(|d| d.instance.clone()).collect();
                    let vals: Vec<f64> = fit_days.iter().map(BenchDay::oracle_value).collect();
                    let ratio = solve_fixed_ratio(&inst, &vals, &grid(grid_step)?)?.ratio;
                    eprintln!("fixed ratio {ratio}");
                    (run_bidder(&mut FixedRatioBidder { ratio }, &days)?, "fixed")
                }
                BaselineKind::Pid => {
                    let gains = fit_pid(&cfg.baselines.pid, &cfg.baselines.pid_gain_scales, &fit()?)?;
                    (run_bidder(&mut PidBidder::new(gains), &days)?, "pid")
                }
                BaselineKind::Cem => (run_bidder(&mut CemBidder::new(cfg.baselines.cem, seed), &days)?, "cem"),
            };
            write_day_results(&out, &results(&days, &outcomes, name))?;
        }
        Command::Metrics { input } => {
            let rows = read_day_results(&input)?;
            let mut agents: Vec<&str> = Vec::new();
            for r in &rows {
                if !agents.contains(&r.agent.as_str()) {
                    agents.push(&r.agent);
                }
            }
            println!("agent,days,ANS,CSR,ANDR");
            for a in agents {
                let sub: Vec<DayResult> = rows.iter().filter(|r| r.agent == a).cloned().collect();
                let m = metrics(&sub)?;
                let andr = m.andr.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
                println!("{a},{},{:.6},{:.6},{andr}", sub.len(), m.ans, m.csr);
            }
        }
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let report = run_experiment(&cfg)?;
            for r in report.summary.iter().filter(|r| r.metric == "ans") {
                println!("{} {}: ANS mean {:.4} (pooled {:.4})", r.split, r.agent, r.mean, r.pooled);
            }
            println!("results in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
