//! Procedural scenario generation: height field, fertility mask, forest and
//! drone station, all derived deterministically from `(seed, difficulty)`.

mod export;
mod forest;
mod noise;
mod scenario;

pub use export::{encode_pgm, height_map_pgm, reforestation_map_pgm, trees_csv, GrayImage};
pub use forest::Forest;
pub use noise::{
    fractal_noise, lattice_hash, lattice_noise, splitmix64, unit_from_bits, NoiseParams,
};
pub use scenario::{
    amplitude, apply_bowl_filter, bowl_gain, generate_scenario, proximity_factor, ForestParams,
    Grid, Scenario, ScenarioConfig, PROXIMITY_FAR, PROXIMITY_NEAR,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(
        "scenario (seed {seed}, difficulty {difficulty}) has no fertile ground; pick another seed"
    )]
    DegenerateScenario { seed: u64, difficulty: u32 },
}
