//! Versioned JSON container for a trained policy.
//!
//! Layout (all numbers are JSON floats written with round-trip precision):
//!
//! ```json
//! {
//!   "version": "roibid-policy/1",
//!   "action_grid": [0.0, 0.1, ...],
//!   "scaler": {"center": [...], "half_range": [...]},
//!   "online": [[{"shape": [in, out], "weights": [...], "bias": [...]}, ...], [...]],
//!   "target": [[...], [...]],
//!   "market": { ...market config... },
//!   "market_fingerprint": "<sha256 hex of the canonical market JSON>",
//!   "curriculum": { "schedule": {...}, "roi_relax": [...], "episodes": n, "updates": n, "diverged": false },
//!   "agent": { ...agent config... },
//!   "seed": 7
//! }
//! ```
//!
//! Weights are stored row-major with `shape = [inputs, outputs]`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::qlearn::{AgentConfig, FeatureScaler, QPolicy, TrainDiagnostics};
use super::qnet::{LayerParams, Mlp};
use crate::error::{Error, Result};
use crate::market::MarketConfig;
use crate::oracle::RatioGrid;
use crate::rewards::CurriculumSchedule;

pub const ARTIFACT_VERSION: &str = "roibid-policy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumMeta {
    pub schedule: CurriculumSchedule,
    /// ROI relaxation of each stage after training.
    pub roi_relax: Vec<f64>,
    pub episodes: usize,
    pub updates: usize,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyArtifact {
    pub version: String,
    pub action_grid: Vec<f64>,
    pub scaler: FeatureScaler,
    pub online: Vec<Vec<LayerParams>>,
    pub target: Vec<Vec<LayerParams>>,
    pub market: MarketConfig,
    pub market_fingerprint: String,
    pub curriculum: CurriculumMeta,
    pub agent: AgentConfig,
    pub seed: u64,
}

/// SHA-256 of the market config's JSON encoding.
pub fn market_fingerprint(market: &MarketConfig) -> String {
    let json = serde_json::to_vec(market).expect("market config serializes");
    hex::encode(Sha256::digest(&json))
}

impl PolicyArtifact {
    pub fn from_policy(
        policy: &QPolicy,
        schedule: &CurriculumSchedule,
        diagnostics: &TrainDiagnostics,
        agent: &AgentConfig,
        seed: u64,
    ) -> Self {
        Self {
            version: ARTIFACT_VERSION.to_string(),
            action_grid: policy.grid.values().to_vec(),
            scaler: policy.scaler.clone(),
            online: policy.online.iter().map(Mlp::to_params).collect(),
            target: policy.target.iter().map(Mlp::to_params).collect(),
            market_fingerprint: market_fingerprint(&policy.market),
            market: policy.market.clone(),
            curriculum: CurriculumMeta {
                schedule: schedule.clone(),
                roi_relax: diagnostics.roi_relax.clone(),
                episodes: diagnostics.episodes,
                updates: diagnostics.updates,
                diverged: diagnostics.diverged.is_some(),
            },
            agent: agent.clone(),
            seed,
        }
    }

    /// Rebuilds the policy, checking version, shapes and fingerprint.
    pub fn to_policy(&self) -> Result<QPolicy> {
        let bad = |m: String| Error::Format {
            path: Default::default(),
            msg: m,
        };
        if self.version != ARTIFACT_VERSION {
            return Err(bad(format!("unsupported artifact version {:?}", self.version)));
        }
        if market_fingerprint(&self.market) != self.market_fingerprint {
            return Err(bad("market fingerprint does not match the stored market config".into()));
        }
        let grid = RatioGrid::new(self.action_grid.clone()).map_err(|e| bad(e.to_string()))?;
        if self.online.len() != 2 || self.target.len() != 2 {
            return Err(bad("expected two online and two target networks".into()));
        }
        let net = |p: &[LayerParams]| Mlp::from_params(p).ok_or_else(|| bad("inconsistent layer shapes".into()));
        let online = [net(&self.online[0])?, net(&self.online[1])?];
        let target = [net(&self.target[0])?, net(&self.target[1])?];
        let input = crate::env::OBS_DIM + self.market.num_regimes();
        for n in online.iter().chain(target.iter()) {
            if n.input_dim() != input || n.output_dim() != grid.len() {
                return Err(bad(format!(
                    "network maps {} -> {}, expected {input} -> {}",
                    n.input_dim(),
                    n.output_dim(),
                    grid.len()
                )));
            }
        }
        Ok(QPolicy {
            online,
            target,
            grid,
            scaler: self.scaler.clone(),
            market: self.market.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)?;
        Self::from_json(&s).map_err(|e| e.context(format!("reading artifact {}", path.display())))
    }
}
