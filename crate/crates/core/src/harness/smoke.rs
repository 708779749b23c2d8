//! Desk-scale training protocol: a small world, a few drones and a short run
//! on one scenario, judged against a uniform random policy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ppo::EpisodeMetrics;
use crate::terrain::generate_scenario;

use super::{
    evaluate_on, new_trainer, EvalPolicy, EvalReport, EvalSetup, ExperimentConfig, HarnessError,
    PresetName,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmokeProtocol {
    pub updates: u64,
    /// Greedy evaluations after each of the last `final_evals` updates.
    pub final_evals: u64,
    pub eval_runs: usize,
    pub eval_steps: u64,
    pub baseline_runs: usize,
}

impl Default for SmokeProtocol {
    fn default() -> Self {
        Self {
            updates: 50,
            final_evals: 5,
            eval_runs: 4,
            eval_steps: 400,
            baseline_runs: 40,
        }
    }
}

/// MA-0 (`max_neighbors = 0`) or MAC-0 (`3`) shrunk to 3 drones in a 300 m
/// world with a small network.
pub fn smoke_config(seed: u64, max_neighbors: usize) -> ExperimentConfig {
    let preset = if max_neighbors > 0 {
        PresetName::Mac0
    } else {
        PresetName::Ma0
    };
    let mut cfg = ExperimentConfig::for_preset(preset);
    cfg.seed = seed;
    cfg.scenario.world_extent = 300.0;
    cfg.scenario.grid_resolution = 61;
    cfg.env.n_drones = 3;
    cfg.env.max_neighbors = max_neighbors;
    cfg.env.episode_length = 400;
    cfg.net.channels = vec![4, 8, 8];
    cfg.net.res_blocks = 1;
    cfg.net.hidden_units = 64;
    cfg.net.num_layers = 2;
    cfg.ppo.buffer_size = 1200;
    cfg.ppo.batch_size = 100;
    cfg.ppo.num_epochs = 3;
    cfg.ppo.time_horizon = 100;
    cfg.ppo.max_steps = 50 * 1200;
    cfg.train.max_updates = Some(50);
    cfg.eval.test_seed = 0;
    cfg.eval.runs = 4;
    cfg.eval.steps = 400;
    cfg.eval.flight_path_steps = 0;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeResult {
    /// Mean metrics of each final greedy evaluation.
    pub evals: Vec<EpisodeMetrics>,
    /// Average of `evals` per metric.
    pub mean: EpisodeMetrics,
    /// Mean training-episode cumulative reward per update (NaN when no episode ended).
    pub train_rewards: Vec<f64>,
}

impl SmokeResult {
    pub fn metric(&self, key: &str) -> f64 {
        self.mean.get(key).copied().unwrap_or(f64::NAN)
    }
}

fn eval_setup(cfg: &ExperimentConfig, protocol: &SmokeProtocol) -> EvalSetup {
    EvalSetup {
        scenario: crate::terrain::ScenarioConfig {
            seed: cfg.preset_info().train_seeds.seed_for(0),
            ..cfg.scenario.clone()
        },
        env: cfg.env.clone(),
        layout: cfg.obs.layout,
        runs: protocol.eval_runs,
        steps: protocol.eval_steps,
        flight_path_steps: 0,
        seed: crate::ppo::derive_seed(cfg.seed, 0, 3),
    }
}

/// Trains in memory and evaluates greedily on the training scenario after
/// each of the final updates.
pub fn run_smoke(
    cfg: &ExperimentConfig,
    protocol: &SmokeProtocol,
) -> Result<SmokeResult, HarnessError> {
    cfg.validate()?;
    let setup = eval_setup(cfg, protocol);
    let scenario = Arc::new(generate_scenario(&setup.scenario)?);
    let mut trainer = new_trainer(cfg)?;
    let mut evals = Vec::new();
    let mut train_rewards = Vec::new();
    for u in 0..protocol.updates {
        let report = trainer.iterate()?;
        train_rewards.push(
            crate::ppo::mean_metrics(&report.episodes)
                .get("cumulative_reward")
                .copied()
                .unwrap_or(f64::NAN),
        );
        if u + protocol.final_evals >= protocol.updates {
            let policy = EvalPolicy::Greedy {
                net: &trainer.net,
                params: &trainer.params,
            };
            evals.push(evaluate_on(Arc::clone(&scenario), &setup, policy)?.mean);
        }
    }
    let mean = crate::ppo::mean_metrics(&evals);
    Ok(SmokeResult {
        evals,
        mean,
        train_rewards,
    })
}

/// Uniform random policy on the same scenario and budget.
pub fn random_baseline(
    cfg: &ExperimentConfig,
    protocol: &SmokeProtocol,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let setup = EvalSetup {
        runs: protocol.baseline_runs,
        ..eval_setup(cfg, protocol)
    };
    let scenario = Arc::new(generate_scenario(&setup.scenario)?);
    evaluate_on(scenario, &setup, EvalPolicy::Random { seed })
}
