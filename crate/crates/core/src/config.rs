//! Experiment configuration: one JSON document whose missing fields take the
//! defaults below.

use serde::{Deserialize, Serialize};

use crate::agent::{DqnConfig, EnvConfig, RewardWeights};
use crate::error::{Error, Result};
use crate::nn::TransformerConfig;
use crate::par::Execution;
use crate::predictor::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TelemetryConfig {
    pub runs: usize,
    pub cycles: usize,
    /// Per-cycle probability of drawing new random fractions.
    pub switch_prob: f64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self { runs: 64, cycles: 300, switch_prob: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSettings {
    pub runs: usize,
    pub eval_episodes: usize,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self { runs: 10, eval_episodes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub iterations: usize,
    pub episodes_per_candidate: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { iterations: 50, episodes_per_candidate: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub telemetry: TelemetryConfig,
    pub transformer: TransformerConfig,
    pub predictor_training: TrainConfig,
    pub env: EnvConfig,
    pub dqn: DqnConfig,
    pub weights: RewardWeights,
    pub agent_episodes: usize,
    pub action_levels: usize,
    pub ablation: AblationSettings,
    pub calibration: CalibrationSettings,
    pub exec: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            telemetry: TelemetryConfig::default(),
            transformer: TransformerConfig::default(),
            predictor_training: TrainConfig::default(),
            env: EnvConfig::default(),
            dqn: DqnConfig::default(),
            weights: RewardWeights::default(),
            agent_episodes: 300,
            action_levels: 5,
            ablation: AblationSettings::default(),
            calibration: CalibrationSettings::default(),
            exec: Execution::Parallel,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.transformer.validate()?;
        self.dqn.validate()?;
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.telemetry.switch_prob) {
            return Err(Error::Config("telemetry.switch_prob must lie in [0, 1]".into()));
        }
        if ![2, 3, 5, 7].contains(&self.action_levels) {
            return Err(Error::Config(format!("action_levels must be 2, 3, 5 or 7, got {}", self.action_levels)));
        }
        if self.env.cycles == 0 {
            return Err(Error::Config("env.cycles must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_partial_override() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let p = ExperimentConfig::from_json(r#"{"dqn": {"gamma": 0.9}, "agent_episodes": 7}"#).unwrap();
        assert_eq!((p.dqn.gamma, p.dqn.batch, p.agent_episodes), (0.9, 128, 7));
        let p = ExperimentConfig::from_json(r#"{"agent_episodes": 7, "telemetry": {"runs": 3}}"#).unwrap();
        assert_eq!((p.agent_episodes, p.telemetry.runs, p.telemetry.cycles), (7, 3, 300));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"action_levels": 4}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"unknown": 1}"#).is_ok());
    }
}
