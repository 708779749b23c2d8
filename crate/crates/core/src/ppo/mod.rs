//! PPO-Clip with generalized advantage estimation, an entropy bonus, linear
//! learning-rate decay and one policy shared by every agent.

mod beacon;
mod buffer;
mod curiosity;
mod gae;
mod trainer;
mod update;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{AdamConfig, NnError};

pub use beacon::BeaconEnv;
pub use buffer::{Batch, RolloutBuffer, Transition};
pub use curiosity::{CuriosityMode, CuriosityModel};
pub use gae::{compute_gae, discounted_sums};
pub use trainer::{
    derive_seed, list_checkpoints, mean_metrics, read_checkpoint_meta, CheckpointMeta, EnvStep,
    EpisodeMetrics, IterationReport, SummaryRecord, TrainEnv, Trainer, TrainerState,
};
pub use update::{clip_objective, normalize_advantages, update, TrainStats};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite loss in update {update}")]
    NonFiniteLoss { update: u64 },
    #[error("invalid ppo config: {0}")]
    InvalidConfig(String),
    #[error("environment: {0}")]
    Env(String),
    #[error("trainer state: {0}")]
    State(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// Entropy bonus coefficient.
    pub beta: f64,
    pub learning_rate: f64,
    pub num_epochs: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub time_horizon: usize,
    /// Agent transitions at which the learning rate reaches zero.
    pub max_steps: u64,
    pub value_coef: f64,
    pub extrinsic_strength: f64,
    pub curiosity: CuriosityMode,
    pub curiosity_strength: f64,
    pub curiosity_encoding: usize,
    pub curiosity_hidden: usize,
    pub adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            epsilon: 0.2,
            beta: 0.005,
            learning_rate: 3e-4,
            num_epochs: 3,
            batch_size: 1024,
            buffer_size: 10240,
            time_horizon: 100,
            max_steps: 10_000_000,
            value_coef: 0.5,
            extrinsic_strength: 0.9,
            curiosity: CuriosityMode::Off,
            curiosity_strength: 0.1,
            curiosity_encoding: 256,
            curiosity_hidden: 256,
            adam: AdamConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: String| Err(PpoError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.learning_rate >= 0.0) || !(self.beta >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("learning_rate, beta and value_coef must be non-negative".into());
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.buffer_size % self.batch_size != 0
        {
            return bad(format!(
                "buffer_size {} must be a positive multiple of batch_size {}",
                self.buffer_size, self.batch_size
            ));
        }
        if self.time_horizon == 0 || self.num_epochs == 0 || self.max_steps == 0 {
            return bad("time_horizon, num_epochs and max_steps must be positive".into());
        }
        if self.curiosity == CuriosityMode::Forward
            && (self.curiosity_encoding == 0 || self.curiosity_hidden == 0)
        {
            return bad("curiosity encoding and hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// Linearly decayed learning rate after `step` agent transitions.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        let frac = 1.0 - step as f64 / self.max_steps as f64;
        self.learning_rate * frac.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PpoConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            PpoConfig {
                gamma: 0.0,
                ..Default::default()
            },
            PpoConfig {
                lambda: 1.5,
                ..Default::default()
            },
            PpoConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            PpoConfig {
                buffer_size: 1000,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn learning_rate_decays_to_zero() {
        let cfg = PpoConfig {
            max_steps: 100,
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 3e-4);
        assert!((cfg.learning_rate_at(50) - 1.5e-4).abs() < 1e-18);
        assert_eq!(cfg.learning_rate_at(100), 0.0);
        assert_eq!(cfg.learning_rate_at(250), 0.0);
    }
}
