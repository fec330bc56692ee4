//! Run configuration: a single TOML file covering dataset generation,
//! model training, planning, and evaluation. Unknown keys are rejected
//! so typos fail loudly instead of silently using defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{JumpyError, Result};
use crate::planner::PlannerConfig;
use crate::skill::SkillModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub episodes: usize,
    pub motion_noise: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            episodes: 500,
            motion_noise: crate::env::DEFAULT_MOTION_NOISE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub seeds: usize,
    pub episode_steps: usize,
    pub finetune_steps: usize,
    pub finetune_episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            seeds: 20,
            episode_steps: 400,
            finetune_steps: 2000,
            finetune_episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub dataset: DatasetSection,
    /// Jumpy model (K = 10 by default).
    pub model: SkillModelConfig,
    /// Non-jumpy baseline model (K forced to 1 by default).
    pub model_k1: SkillModelConfig,
    pub planner: PlannerConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn defaults() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model_k1.k = 1;
        // One-step reconstruction is much easier than a ten-step jump, so
        // the default KL weight collapses the K=1 posterior onto a single
        // live dimension. A lighter weight keeps the latent space spread
        // enough for planning to steer in every direction.
        cfg.model_k1.beta_kl = 0.005;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.model_k1.validate()?;
        self.planner.validate()?;
        if self.dataset.episodes == 0 {
            return Err(JumpyError::config("dataset.episodes must be >= 1"));
        }
        if !(self.dataset.motion_noise >= 0.0) {
            return Err(JumpyError::config("dataset.motion_noise must be >= 0"));
        }
        if self.eval.seeds == 0 || self.eval.episode_steps == 0 {
            return Err(JumpyError::config("eval.seeds and eval.episode_steps must be >= 1"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        // start from defaults() so an absent [model_k1] still gets K = 1
        let mut cfg = RunConfig::defaults();
        let parsed: RunConfig = toml::from_str(text)
            .map_err(|e| JumpyError::config(format!("TOML parse error: {e}")))?;
        // detect which sections were present to merge against defaults
        let table: toml::Table = toml::from_str(text)
            .map_err(|e| JumpyError::config(format!("TOML parse error: {e}")))?;
        if table.contains_key("run") {
            cfg.run = parsed.run;
        }
        if table.contains_key("dataset") {
            cfg.dataset = parsed.dataset;
        }
        if table.contains_key("model") {
            cfg.model = parsed.model;
        }
        if table.contains_key("model_k1") {
            cfg.model_k1 = parsed.model_k1;
        }
        if table.contains_key("planner") {
            cfg.planner = parsed.planner;
        }
        if table.contains_key("eval") {
            cfg.eval = parsed.eval;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| JumpyError::Storage {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| JumpyError::config(e.to_string()))
    }
}
