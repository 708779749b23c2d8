//! The drone environment wrapped for the trainer: scenario schedule, frame
//! stacking and action decoding.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{AgentAction, DroneEnv, EnvConfig, EnvState, EpisodeSummary, StepResult};
use crate::obs::{ObsLayout, ObsStacker};
use crate::ppo::{derive_seed, EnvStep, EpisodeMetrics, TrainEnv};
use crate::terrain::{generate_scenario, Scenario, ScenarioConfig};

use super::{HarnessError, SeedSchedule};

/// Builds the environment action from policy outputs: continuous
/// `[forward, rotate, vertical]`, branch 0 drops the seed, branch 1 saves.
pub fn decode_action(continuous: &[f64], discrete: &[usize]) -> AgentAction {
    let c = |i: usize| continuous.get(i).copied().unwrap_or(0.0);
    AgentAction {
        movement: [c(0), c(1), c(2)],
        drop_seed: discrete.first() == Some(&1),
        save_location: discrete.get(1) == Some(&1),
    }
}

/// Table-style metric names for an episode summary.
pub fn summary_metrics(s: &EpisodeSummary) -> EpisodeMetrics {
    EpisodeMetrics::from([
        ("cumulative_reward".to_string(), s.cumulative_reward),
        ("tree_drop_count".to_string(), s.tree_drop_count),
        ("tree_drop_reward".to_string(), s.tree_drop_reward),
        ("distance_reward".to_string(), s.return_reward),
        ("station_bonus".to_string(), s.station_bonus),
        ("out_of_energy_count".to_string(), s.out_of_energy_count),
        ("recharge_count".to_string(), s.recharge_count),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskSnapshot {
    episode: u64,
    scenario_seed: u64,
    state: EnvState,
    stacker: ObsStacker,
}

pub struct DroneTask {
    base: ScenarioConfig,
    schedule: SeedSchedule,
    seed: u64,
    episode: u64,
    pub env: DroneEnv,
    pub stacker: ObsStacker,
}

pub fn flatten(obs: Vec<crate::obs::StackedObs>) -> Vec<Vec<f32>> {
    obs.iter().map(|o| o.flat()).collect()
}

impl DroneTask {
    /// `seed` drives the per-episode spawn headings; `base.seed` is ignored in
    /// favour of the schedule.
    pub fn new(
        base: ScenarioConfig,
        env_config: EnvConfig,
        layout: ObsLayout,
        schedule: SeedSchedule,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let scenario = Arc::new(Self::generate(&base, schedule.seed_for(0))?);
        Self::with_scenario(scenario, base, env_config, layout, schedule, seed)
    }

    /// Like [`DroneTask::new`] but reuses an already generated first scenario.
    pub fn with_scenario(
        scenario: Arc<Scenario>,
        base: ScenarioConfig,
        env_config: EnvConfig,
        layout: ObsLayout,
        schedule: SeedSchedule,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let n = env_config.n_drones;
        let env = DroneEnv::new(scenario, env_config, derive_seed(seed, 0, 1))?;
        Ok(Self {
            base,
            schedule,
            seed,
            episode: 0,
            env,
            stacker: ObsStacker::new(layout, n),
        })
    }

    fn generate(base: &ScenarioConfig, seed: u64) -> Result<Scenario, HarnessError> {
        Ok(generate_scenario(&ScenarioConfig {
            seed,
            ..base.clone()
        })?)
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.env.scenario
    }

    /// Episodes started so far.
    pub fn episode(&self) -> u64 {
        self.episode
    }

    fn ensure_scenario(&mut self, seed: u64) -> Result<(), HarnessError> {
        if self.env.scenario.config.seed != seed {
            self.env.scenario = Arc::new(Self::generate(&self.base, seed)?);
        }
        Ok(())
    }

    /// Starts the next scheduled episode.
    pub fn start_episode(&mut self) -> Result<Vec<Vec<f32>>, HarnessError> {
        let seed = self.schedule.seed_for(self.episode);
        self.ensure_scenario(seed)?;
        self.env.reset(derive_seed(self.seed, self.episode, 1));
        self.episode += 1;
        self.stacker.reset();
        Ok(self.observe())
    }

    pub fn observe(&mut self) -> Vec<Vec<f32>> {
        flatten(self.stacker.observe(&self.env.scenario, &self.env.state))
    }

    pub fn step_actions(
        &mut self,
        actions: &[AgentAction],
    ) -> Result<(StepResult, Vec<Vec<f32>>), HarnessError> {
        let r = self.env.step(actions)?;
        let obs = self.observe();
        Ok((r, obs))
    }
}

impl TrainEnv for DroneTask {
    fn n_agents(&self) -> usize {
        self.env.n_agents()
    }

    fn reset(&mut self) -> Result<Vec<Vec<f32>>, String> {
        self.start_episode().map_err(|e| e.to_string())
    }

    fn step(
        &mut self,
        continuous: &[Vec<f64>],
        discrete: &[Vec<usize>],
    ) -> Result<EnvStep, String> {
        let actions: Vec<AgentAction> = continuous
            .iter()
            .zip(discrete)
            .map(|(c, d)| decode_action(c, d))
            .collect();
        let (r, next_obs) = self.step_actions(&actions).map_err(|e| e.to_string())?;
        Ok(EnvStep {
            next_obs,
            rewards: r.rewards.iter().map(|b| b.total()).collect(),
            episode_end: r.done,
            terminal: false,
            metrics: r.done.then(|| summary_metrics(&self.env.episode_summary())),
        })
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(TaskSnapshot {
            episode: self.episode,
            scenario_seed: self.env.scenario.config.seed,
            state: self.env.state.clone(),
            stacker: self.stacker.clone(),
        })
        .expect("snapshot serializes")
    }

    fn restore(&mut self, state: &serde_json::Value) -> Result<(), String> {
        let snap: TaskSnapshot =
            serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        self.ensure_scenario(snap.scenario_seed)
            .map_err(|e| e.to_string())?;
        if snap.state.drones.len() != self.env.n_agents() {
            return Err("snapshot agent count differs from the environment".into());
        }
        self.episode = snap.episode;
        self.env.state = snap.state;
        self.stacker = snap.stacker;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            world_extent: 300.0,
            grid_resolution: 61,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn cycling_schedule_advances_scenarios() {
        let env = EnvConfig {
            n_drones: 2,
            episode_length: 3,
            ..EnvConfig::default()
        };
        let mut t = DroneTask::new(
            small(),
            env,
            ObsLayout::Full21,
            SeedSchedule::Cycle { start: 0, count: 3 },
            0,
        )
        .unwrap();
        let mut seen = Vec::new();
        for _ in 0..5 {
            t.start_episode().unwrap();
            seen.push(t.scenario().config.seed);
        }
        assert_eq!(seen, vec![0, 1, 2, 0, 1]);
    }

    #[test]
    fn episode_end_reports_metrics_and_snapshot_roundtrips() {
        let env = EnvConfig {
            n_drones: 2,
            episode_length: 4,
            ..EnvConfig::default()
        };
        let mut t = DroneTask::new(
            small(),
            env.clone(),
            ObsLayout::Full21,
            SeedSchedule::Fixed(0),
            5,
        )
        .unwrap();
        let obs = t.start_episode().unwrap();
        assert_eq!(obs[0].len(), ObsLayout::Full21.total_len());
        let act = vec![vec![1.0, 0.3, 0.0]; 2];
        let disc = vec![vec![0, 1]; 2];
        TrainEnv::step(&mut t, &act, &disc).unwrap();
        let snap = t.snapshot();
        let mut u =
            DroneTask::new(small(), env, ObsLayout::Full21, SeedSchedule::Fixed(0), 5).unwrap();
        u.restore(&snap).unwrap();
        let mut last = None;
        for _ in 0..3 {
            let a = TrainEnv::step(&mut t, &act, &disc).unwrap();
            let b = TrainEnv::step(&mut u, &act, &disc).unwrap();
            assert_eq!(a, b);
            last = Some(a);
        }
        let last = last.unwrap();
        assert!(last.episode_end);
        assert!(last.metrics.unwrap().contains_key("distance_reward"));
    }

    #[test]
    fn action_decoding() {
        let a = decode_action(&[0.5, -1.0, 0.25], &[1, 0]);
        assert_eq!(a.movement, [0.5, -1.0, 0.25]);
        assert!(a.drop_seed && !a.save_location);
    }
}
