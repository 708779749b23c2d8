//! Experiment presets, configuration files, training and evaluation
//! orchestration, and raster exports.

mod config;
mod eval;
mod preset;
mod render;
mod smoke;
mod task;
mod train;

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;
use crate::ppo::PpoError;
use crate::terrain::TerrainError;

pub use config::{EvalSection, ExperimentConfig, ObsSection, TrainSection, SCHEMA_VERSION};
pub use eval::{
    evaluate, evaluate_on, mean_stderr, EvalPolicy, EvalReport, EvalRun, EvalSetup, METRIC_COLUMNS,
};
pub use preset::{ExperimentPreset, PresetName, SeedSchedule, PRESETS, TEST_SEED};
pub use render::{
    altitude_profile_csv, difficulty_seed_matrix, flight_overlay, parse_trajectory,
    render_scenario, write_render, RenderSet, TrajectoryPoint,
};
pub use smoke::{random_baseline, run_smoke, smoke_config, SmokeProtocol, SmokeResult};
pub use task::{decode_action, summary_metrics, DroneTask};
pub use train::{
    build_id, build_tasks, new_trainer, read_metrics, run_training, thread_pool, MetricsBody,
    MetricsLog, MetricsRecord, TrainOutcome, CONFIG_FILE, METRICS_FILE, THREADS_ENV,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Ppo(PpoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteGradient { .. } => Self::Numeric(e.to_string()),
            NnError::ConfigMismatch { .. } => Self::Config(e.to_string()),
            other => Self::Nn(other),
        }
    }
}

impl From<PpoError> for HarnessError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::NonFiniteLoss { .. } => Self::Numeric(e.to_string()),
            PpoError::InvalidConfig(m) => Self::Config(m),
            PpoError::Nn(n) => n.into(),
            other => Self::Ppo(other),
        }
    }
}

impl HarnessError {
    /// Process exit status: 2 for configuration problems, 3 for numeric
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Terrain(TerrainError::InvalidConfig(_))
            | Self::Env(EnvError::InvalidConfig(_)) => 2,
            Self::Numeric(_) => 3,
            _ => 1,
        }
    }
}
