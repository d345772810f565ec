//! Experiment configuration: a single versioned JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{RewardWeights, Track};
use crate::envmodels::EnvModels;
use crate::planner::MctsConfig;
use crate::sim::benchmark::{default_env, default_surfaces, default_tracks, HistoryConfig};
use crate::sim::{FailureSchedule, SimConfig};
use crate::surrogate::ControllerSurfaces;
use crate::switcher::{LatencyModel, Strategy, SwitchConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV_VAR: &str = "DS_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// names of benchmark tracks or of `custom_tracks`; empty means all benchmark tracks
    #[serde(default)]
    pub tracks: Vec<String>,
    #[serde(default)]
    pub custom_tracks: Vec<Track>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_runs")]
    pub runs_per_cell: usize,
    #[serde(default = "default_schedules")]
    pub failure_schedules: Vec<FailureSchedule>,
    #[serde(default)]
    pub weights: RewardWeights,
    #[serde(default)]
    pub mcts: MctsConfig,
    #[serde(default)]
    pub switch: Option<SwitchConfig>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default = "default_env")]
    pub env: EnvModels,
    #[serde(default = "default_surfaces")]
    pub surfaces: ControllerSurfaces,
    #[serde(default)]
    pub history: HistoryConfig,
    /// lookup-table CSV to use instead of generated history
    #[serde(default)]
    pub lut_path: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    /// iteration budgets for the planner timing table
    #[serde(default = "default_timing")]
    pub timing_iterations: Vec<usize>,
    #[serde(default = "default_timing_calls")]
    pub timing_calls: usize,
    #[serde(default)]
    pub write_event_logs: bool,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
}

fn default_runs() -> usize {
    30
}
fn default_schedules() -> Vec<FailureSchedule> {
    vec![FailureSchedule::None]
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_timing() -> Vec<usize> {
    vec![100, 500, 1000, 2000]
}
fn default_timing_calls() -> usize {
    10
}
fn default_max_time() -> f64 {
    3600.0
}

impl ExperimentConfig {
    /// All strategies on all benchmark tracks, no failures.
    pub fn default_matrix() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            tracks: Vec::new(),
            custom_tracks: Vec::new(),
            strategies: Strategy::ALL.to_vec(),
            runs_per_cell: default_runs(),
            failure_schedules: default_schedules(),
            weights: RewardWeights::default(),
            mcts: MctsConfig::default(),
            switch: None,
            latency: LatencyModel::default(),
            env: default_env(),
            surfaces: default_surfaces(),
            history: HistoryConfig::default(),
            lut_path: None,
            master_seed: 0,
            output_dir: default_out(),
            timing_iterations: default_timing(),
            timing_calls: default_timing_calls(),
            write_event_logs: false,
            max_time: default_max_time(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ConfigError::Invalid("missing schema_version".into()))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(ConfigError::Schema(version as u32));
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; `DS_SEED` overrides the master seed.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV_VAR) {
            cfg.master_seed = seed
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV_VAR}={seed} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.runs_per_cell == 0 {
            return bad("runs_per_cell must be >= 1".into());
        }
        if self.strategies.is_empty() {
            return bad("strategies is empty".into());
        }
        if self.failure_schedules.is_empty() {
            return bad("failure_schedules is empty".into());
        }
        for t in &self.custom_tracks {
            t.validate().map_err(|e| ConfigError::Invalid(format!("track {}: {e}", t.id)))?;
        }
        self.resolve_tracks()?;
        for &s in &self.failure_schedules {
            self.sim_config(s)
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.history.k == 0 || self.history.records_per_scene == 0 {
            return bad("history.k and history.records_per_scene must be >= 1".into());
        }
        Ok(())
    }

    /// Tracks referenced by the config, in order.
    pub fn resolve_tracks(&self) -> Result<Vec<Track>, ConfigError> {
        let bench = default_tracks();
        if self.tracks.is_empty() {
            return Ok(if self.custom_tracks.is_empty() {
                bench
            } else {
                self.custom_tracks.clone()
            });
        }
        self.tracks
            .iter()
            .map(|name| {
                self.custom_tracks
                    .iter()
                    .chain(bench.iter())
                    .find(|t| &t.id == name)
                    .cloned()
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown track `{name}`")))
            })
            .collect()
    }

    pub fn sim_config(&self, schedule: FailureSchedule) -> SimConfig {
        SimConfig {
            env: self.env.clone(),
            weights: self.weights,
            mcts: self.mcts,
            switch: self.switch.clone(),
            latency: self.latency,
            failure_schedule: schedule,
            max_time: self.max_time,
            ..SimConfig::new(self.surfaces.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version": 1, "strategies": ["DS"]}"#).unwrap();
        assert_eq!(cfg.runs_per_cell, 30);
        assert_eq!(cfg.weights, RewardWeights::default());
        assert_eq!(cfg.mcts.iterations, 500);
        assert_eq!(cfg.mcts.tau_q, 20.0);
        assert_eq!(cfg.resolve_tracks().unwrap().len(), 4);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version": 2, "strategies": ["DS"]}"#),
            Err(ConfigError::Schema(2))
        ));
        assert!(ExperimentConfig::from_json(r#"{"strategies": ["DS"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "strategies": ["DS"], "runs_per_cell": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "strategies": ["DS"], "tracks": ["nowhere"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "strategies": ["XX"]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 1, "strategies": ["DS"], "bogus": 1}"#).is_err());
    }

    #[test]
    fn default_matrix_round_trips() {
        let cfg = ExperimentConfig::default_matrix();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
