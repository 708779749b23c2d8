//! Deterministic multi-drone reforestation simulator: procedural terrain,
//! a lockstep environment with a proximity message layer, observation
//! builders, a small neural network core and a PPO-Clip trainer.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod comms;
pub mod env;
pub mod harness;
pub mod nn;
pub mod obs;
pub mod ppo;
pub mod terrain;

pub use comms::{build_graph, Inbox, Message, ProximityGraph};
pub use env::{
    AgentAction, DroneEnv, DroneState, EnvConfig, EnvError, EnvState, EpisodeSummary, StepResult,
};
pub use harness::{EvalReport, ExperimentConfig, ExperimentPreset, HarnessError, PresetName};
pub use nn::{NetConfig, NnError, PolicyNet};
pub use obs::{ObsLayout, StackedObs};
pub use ppo::{PpoConfig, PpoError, Trainer};
pub use terrain::{generate_scenario, Scenario, ScenarioConfig, TerrainError};
