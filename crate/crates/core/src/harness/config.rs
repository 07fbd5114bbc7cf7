//! Experiment configuration, read from TOML.
//!
//! Every table is optional and falls back to the default benchmark:
//!
//! ```toml
//! seed = 7
//! output_dir = "results"
//!
//! [market]                 # regime-switching market
//! transition_matrix = [[0.95, 0.05], [0.05, 0.95]]
//! slots_per_day = 48
//! seed = 7
//! [[market.regimes]]
//! regime_id = 0
//! price_ratio_log_mean = -0.693
//! price_ratio_log_std = 0.5
//! arrival_rate = 50.0
//! utility_log_mean = 0.0
//! utility_log_std = 0.5
//! delivery_noise_log_std = 0.3
//!
//! [constraints]            # "SC": fixed L, no budget; "MC": sampled (L, B)
//! setting = "SC"
//! roi_limit = 1.0
//! roi_range = [0.8, 1.5]
//! budget_fraction = [0.25, 0.75]
//!
//! [curriculum]
//! shape_exponent = 3.0
//! smoothness = 10.0
//! [[curriculum.stages]]
//! roi_relax = 0.1
//! budget_reserve = 0.95
//! epochs = 3
//!
//! [agent]                  # see AgentConfig
//! episodes_per_epoch = 500
//!
//! [oracle]
//! grid_step = 0.1
//!
//! [evaluation]
//! baseline_days = 100
//! test_days = 100
//! shifted_days = 100
//! eval_seeds = 20
//! shifted_offset = 0.35
//!
//! [baselines]
//! pid_gain_scales = [0.25, 0.5, 1.0, 2.0, 4.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::{shifted_market, Constraints, OracleSetup};
use crate::agents::{AgentConfig, CemConfig, PidGains};
use crate::error::{Error, Result};
use crate::market::MarketConfig;
use crate::oracle::{OracleOptions, RatioGrid};
use crate::rewards::{CurriculumSchedule, StageSpec};

fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_grid_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default)]
    pub options: OracleOptions,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_step: default_grid_step(),
            options: OracleOptions::default(),
        }
    }
}

impl OracleConfig {
    pub fn setup(&self) -> Result<OracleSetup> {
        Ok(OracleSetup {
            grid: RatioGrid::uniform(self.grid_step).map_err(|e| Error::Config(format!("oracle: {e}")))?,
            options: self.options,
        })
    }
}

fn default_days() -> usize {
    100
}
fn default_eval_seeds() -> usize {
    20
}
fn default_offset() -> f64 {
    0.35
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Days the fixed-ratio and PID baselines are fitted on.
    #[serde(default = "default_days")]
    pub baseline_days: usize,
    /// Held-out days per evaluation seed.
    #[serde(default = "default_days")]
    pub test_days: usize,
    /// Days per evaluation seed drawn from the price-shifted market.
    #[serde(default = "default_days")]
    pub shifted_days: usize,
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: usize,
    /// Shift of every regime's price-ratio log mean in the shifted split.
    #[serde(default = "default_offset")]
    pub shifted_offset: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            baseline_days: default_days(),
            test_days: default_days(),
            shifted_days: default_days(),
            eval_seeds: default_eval_seeds(),
            shifted_offset: default_offset(),
        }
    }
}

fn default_scales() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default)]
    pub pid: PidGains,
    /// Gain multipliers tried when fitting the PID baseline.
    #[serde(default = "default_scales")]
    pub pid_gain_scales: Vec<f64>,
    #[serde(default)]
    pub cem: CemConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            pid: PidGains::default(),
            pid_gain_scales: default_scales(),
            cem: CemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "MarketConfig::two_regime_default")]
    pub market: MarketConfig,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(default)]
    pub curriculum: CurriculumSchedule,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output(),
            market: MarketConfig::two_regime_default(),
            constraints: Constraints::default(),
            curriculum: CurriculumSchedule::default(),
            agent: AgentConfig::default(),
            oracle: OracleConfig::default(),
            evaluation: EvaluationConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.constraints.validate()?;
        self.curriculum.validate()?;
        self.agent.validate()?;
        self.oracle.setup()?;
        let e = &self.evaluation;
        if e.baseline_days == 0 || e.test_days == 0 || e.eval_seeds == 0 {
            return Err(Error::Config("evaluation: day and seed counts must be positive".into()));
        }
        if e.shifted_days > 0 {
            shifted_market(&self.market, e.shifted_offset)?;
        }
        if self.baselines.pid_gain_scales.is_empty() || self.baselines.pid_gain_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("baselines: PID gain scales must be positive".into()));
        }
        let c = &self.baselines.cem;
        if c.population == 0 || !(c.elite_fraction > 0.0 && c.elite_fraction <= 1.0) || !(c.min_std > 0.0) {
            return Err(Error::Config("baselines: invalid CEM settings".into()));
        }
        Ok(())
    }

    /// A tiny end-to-end configuration: two-slot days with a handful of
    /// impressions, a five-point grid and a few training episodes.
    pub fn smoke() -> Self {
        let mut market = MarketConfig::two_regime_default();
        market.slots_per_day = 2;
        for r in &mut market.regimes {
            r.arrival_rate = 4.0;
        }
        Self {
            seed: 1,
            market,
            curriculum: CurriculumSchedule {
                stages: vec![
                    StageSpec {
                        roi_relax: 0.1,
                        budget_reserve: 0.95,
                        epochs: 1,
                    },
                    StageSpec {
                        roi_relax: 0.0,
                        budget_reserve: 0.0,
                        epochs: 1,
                    },
                ],
                ..CurriculumSchedule::default()
            },
            agent: AgentConfig {
                hidden: vec![8],
                episodes_per_epoch: 2,
                batch_size: 4,
                updates_per_episode: 2,
                sync_every: 2,
                grid_step: 1.0,
                ..AgentConfig::default()
            },
            oracle: OracleConfig {
                grid_step: 1.0,
                options: OracleOptions::default(),
            },
            evaluation: EvaluationConfig {
                baseline_days: 2,
                test_days: 2,
                shifted_days: 2,
                eval_seeds: 2,
                shifted_offset: 0.35,
            },
            ..Self::default()
        }
    }
}
