//! Experiment configuration file (TOML).
//!
//! ```toml
//! schema_version = 1
//! preset = "MAC-0-99"       # MA-0 | MA-0-99 | MAC-0 | MAC-0-99
//! seed = 0                  # trainer seed (init, sampling, shuffling)
//!
//! [scenario]                # terrain; `seed` is set per episode by the preset
//! difficulty = 5
//! world_extent = 1200.0
//!
//! [env]                     # dynamics; n_drones / max_neighbors default to the preset
//! episode_length = 5000
//!
//! [obs]
//! layout = "full21"         # full21 | paper15
//!
//! [net]                     # vector_dim and visual_side are derived from [obs]
//! channels = [16, 32, 32]
//!
//! [ppo]                     # PPO hyperparameters
//! [train]                   # n_envs, max_updates, summary_freq, keep_checkpoints
//! [eval]                    # test_seed, runs, steps, flight_path_steps
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::nn::NetConfig;
use crate::obs::{ObsLayout, VISUAL_SIDE};
use crate::ppo::PpoConfig;
use crate::terrain::ScenarioConfig;

use super::{ExperimentPreset, HarnessError, PresetName};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Parallel environment instances, each with the preset's agent count.
    pub n_envs: usize,
    /// Stop after this many updates; otherwise run until `ppo.max_steps`.
    pub max_updates: Option<u64>,
    pub summary_freq: u64,
    pub keep_checkpoints: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            n_envs: 1,
            max_updates: None,
            summary_freq: 20_000,
            keep_checkpoints: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub test_seed: u64,
    pub runs: usize,
    pub steps: u64,
    /// Leading steps of each run exported as a flight path.
    pub flight_path_steps: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            test_seed: super::TEST_SEED,
            runs: 10,
            steps: 20_000,
            flight_path_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsSection {
    pub layout: ObsLayout,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    preset: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    scenario: ScenarioConfig,
    #[serde(default)]
    env: toml::Table,
    #[serde(default)]
    obs: ObsSection,
    #[serde(default)]
    net: NetConfig,
    #[serde(default)]
    ppo: PpoConfig,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    eval: Option<EvalSection>,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub preset: PresetName,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub env: EnvConfig,
    pub obs: ObsSection,
    pub net: NetConfig,
    pub ppo: PpoConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Defaults for a preset at full scale.
    pub fn for_preset(preset: PresetName) -> Self {
        let p = preset.preset();
        let mut cfg = Self {
            schema_version: SCHEMA_VERSION,
            preset,
            seed: 0,
            scenario: ScenarioConfig::default(),
            env: preset_env(&p),
            obs: ObsSection::default(),
            net: NetConfig::default(),
            ppo: PpoConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection {
                test_seed: p.test_seed,
                ..EvalSection::default()
            },
        };
        cfg.sync_net();
        cfg
    }

    pub fn preset_info(&self) -> ExperimentPreset {
        self.preset.preset()
    }

    /// Parses TOML text; errors carry the offending line and column.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let preset: PresetName = raw.preset.parse().map_err(HarnessError::Config)?;
        let p = preset.preset();
        let mut env = toml::Table::try_from(preset_env(&p))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        env.extend(raw.env);
        let env: EnvConfig = toml::Value::Table(env)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(format!("[env]: {e}")))?;
        let mut cfg = Self {
            schema_version: raw.schema_version,
            preset,
            seed: raw.seed,
            scenario: raw.scenario,
            env,
            obs: raw.obs,
            net: raw.net,
            ppo: raw.ppo,
            train: raw.train,
            eval: raw.eval.unwrap_or(EvalSection {
                test_seed: p.test_seed,
                ..EvalSection::default()
            }),
        };
        cfg.sync_net();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Network input sizes follow the observation layout.
    fn sync_net(&mut self) {
        self.net.vector_dim = self.obs.layout.stacked_len();
        self.net.visual_side = VISUAL_SIDE;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg_err = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        self.scenario.validate().map_err(|e| cfg_err(&e))?;
        self.env.validate().map_err(|e| cfg_err(&e))?;
        self.ppo.validate().map_err(|e| cfg_err(&e))?;
        if self.net.channels.len() != 3 || self.net.channels.contains(&0) {
            return Err(HarnessError::Config(
                "[net] channels must list three positive widths".into(),
            ));
        }
        if self.net.continuous_dim != 3 || self.net.branches != [2, 2] {
            return Err(HarnessError::Config(
                "[net] the drone task needs continuous_dim = 3 and branches = [2, 2]".into(),
            ));
        }
        if self.net.num_layers == 0 || self.net.hidden_units == 0 {
            return Err(HarnessError::Config(
                "[net] num_layers and hidden_units must be positive".into(),
            ));
        }
        if self.train.n_envs == 0 || self.train.keep_checkpoints == 0 {
            return Err(HarnessError::Config(
                "[train] n_envs and keep_checkpoints must be positive".into(),
            ));
        }
        if self.eval.runs == 0 || self.eval.steps == 0 {
            return Err(HarnessError::Config(
                "[eval] runs and steps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// FNV-1a of the canonical JSON form, as 16 hex digits.
    pub fn hash(&self) -> String {
        fnv_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Hash of everything that shapes the training trajectory; run length,
    /// checkpoint cadence and evaluation settings are excluded so a run can
    /// be extended.
    pub fn resume_hash(&self) -> String {
        let core = (
            self.preset,
            self.seed,
            &self.scenario,
            &self.env,
            &self.obs,
            &self.net,
            &self.ppo,
            self.train.n_envs,
        );
        fnv_hex(&serde_json::to_vec(&core).expect("config serializes"))
    }
}

fn fnv_hex(bytes: &[u8]) -> String {
    let h = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    format!("{h:016x}")
}

fn preset_env(p: &ExperimentPreset) -> EnvConfig {
    EnvConfig {
        n_drones: p.n_agents,
        max_neighbors: p.max_neighbors,
        ..EnvConfig::default()
    }
}
