//! One-dimensional "move toward the beacon" task. Small and fast enough to
//! check that the trainer actually learns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, EnvStep, EpisodeMetrics, TrainEnv};

/// Each agent sits on `[-1, 1]` and is paid `-|beacon - x|` per step.
/// Observation: `[x, beacon - x]`. Action: one continuous velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconEnv {
    pub n_agents: usize,
    pub episode_length: usize,
    pub speed: f64,
    seed: u64,
    episode: u64,
    t: usize,
    pos: Vec<f64>,
    beacon: Vec<f64>,
    total: f64,
}

impl BeaconEnv {
    pub fn new(n_agents: usize, episode_length: usize, seed: u64) -> Self {
        Self {
            n_agents,
            episode_length,
            speed: 0.2,
            seed,
            episode: 0,
            t: 0,
            pos: vec![0.0; n_agents],
            beacon: vec![0.0; n_agents],
            total: 0.0,
        }
    }

    fn observe(&self) -> Vec<Vec<f32>> {
        self.pos
            .iter()
            .zip(&self.beacon)
            .map(|(&x, &b)| vec![x as f32, (b - x) as f32])
            .collect()
    }
}

impl TrainEnv for BeaconEnv {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn reset(&mut self) -> Result<Vec<Vec<f32>>, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, self.episode, 0));
        self.episode += 1;
        self.t = 0;
        self.total = 0.0;
        for (x, b) in self.pos.iter_mut().zip(&mut self.beacon) {
            *x = rng.random_range(-1.0..1.0);
            *b = rng.random_range(-1.0..1.0);
        }
        Ok(self.observe())
    }

    fn step(
        &mut self,
        continuous: &[Vec<f64>],
        _discrete: &[Vec<usize>],
    ) -> Result<EnvStep, String> {
        if continuous.len() != self.n_agents {
            return Err(format!(
                "expected {} actions, got {}",
                self.n_agents,
                continuous.len()
            ));
        }
        let mut rewards = Vec::with_capacity(self.n_agents);
        for ((x, b), a) in self.pos.iter_mut().zip(&self.beacon).zip(continuous) {
            let v = a.first().copied().unwrap_or(0.0).clamp(-1.0, 1.0);
            *x = (*x + self.speed * v).clamp(-1.0, 1.0);
            rewards.push(-(b - *x).abs());
        }
        self.total += rewards.iter().sum::<f64>() / self.n_agents as f64;
        self.t += 1;
        let episode_end = self.t >= self.episode_length;
        let metrics = episode_end
            .then(|| EpisodeMetrics::from([("cumulative_reward".to_string(), self.total)]));
        Ok(EnvStep {
            next_obs: self.observe(),
            rewards,
            episode_end,
            terminal: false,
            metrics,
        })
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }

    fn restore(&mut self, state: &serde_json::Value) -> Result<(), String> {
        *self = serde_json::from_value(state.clone()).map_err(|e| e.to_string())?;
        Ok(())
    }
}
