//! Collection and training loop. Environment workers run in parallel, each
//! with its own RNG stream derived from `(seed, update, worker)`, and their
//! batches are concatenated in worker order so results do not depend on how
//! many threads execute them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{
    config_hash, load_checkpoint, log_prob, sample_action, save_checkpoint, write_atomic, Adam,
    NetConfig, PolicyNet,
};
use crate::terrain::splitmix64;

use super::{
    update, Batch, CuriosityMode, CuriosityModel, PpoConfig, PpoError, RolloutBuffer, TrainStats,
    Transition,
};

/// Named per-episode metrics, e.g. `cumulative_reward`.
pub type EpisodeMetrics = BTreeMap<String, f64>;

/// Mixes a seed with two stream indices.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b.rotate_left(32))
}

/// Outcome of one lockstep step of all agents in an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    /// Observations after the step, before any reset.
    pub next_obs: Vec<Vec<f32>>,
    pub rewards: Vec<f64>,
    /// The episode is over; the trainer calls `reset` next.
    pub episode_end: bool,
    /// The episode ended in a true terminal state rather than a time limit,
    /// so no value is bootstrapped past it.
    pub terminal: bool,
    /// Filled on `episode_end`.
    pub metrics: Option<EpisodeMetrics>,
}

/// A multi-agent environment the trainer can drive. All agents share one policy.
pub trait TrainEnv: Send {
    fn n_agents(&self) -> usize;
    /// Starts the next episode and returns every agent's observation.
    fn reset(&mut self) -> Result<Vec<Vec<f32>>, String>;
    fn step(&mut self, continuous: &[Vec<f64>], discrete: &[Vec<usize>])
        -> Result<EnvStep, String>;
    fn snapshot(&self) -> serde_json::Value;
    fn restore(&mut self, state: &serde_json::Value) -> Result<(), String>;
}

struct Worker<E> {
    env: E,
    obs: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub stats: TrainStats,
    pub episodes: Vec<EpisodeMetrics>,
    pub step: u64,
}

/// Aggregate emitted every `summary_freq` agent steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub step: u64,
    pub update: u64,
    pub episodes: usize,
    /// Mean of each episode metric over the episodes finished since the last summary.
    pub metrics: EpisodeMetrics,
    pub stats: TrainStats,
}

/// Everything besides the parameters that a resumed run needs to continue
/// exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub seed: u64,
    pub step: u64,
    pub update: u64,
    pub last_summary_step: u64,
    pub pending_episodes: Vec<EpisodeMetrics>,
    pub net_config: NetConfig,
    pub ppo_config: PpoConfig,
    pub adam: Adam,
    pub curiosity: Option<CuriosityModel>,
    pub env_states: Vec<serde_json::Value>,
    /// Current observations as raw `f32` bits, per worker and agent.
    pub obs_bits: Vec<Vec<Vec<u32>>>,
}

/// Sidecar written next to every parameter checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub net: NetConfig,
    pub step: u64,
    pub update: u64,
    /// Caller-provided context (experiment config, preset, ...).
    pub extra: serde_json::Value,
}

pub struct Trainer<E> {
    pub net: PolicyNet,
    pub params: Vec<f32>,
    pub adam: Adam,
    pub config: PpoConfig,
    pub curiosity: Option<CuriosityModel>,
    pub seed: u64,
    pub step: u64,
    pub update: u64,
    last_summary_step: u64,
    pending_episodes: Vec<EpisodeMetrics>,
    workers: Vec<Worker<E>>,
}

impl<E: TrainEnv> Trainer<E> {
    pub fn new(
        net_config: NetConfig,
        config: PpoConfig,
        envs: Vec<E>,
        seed: u64,
    ) -> Result<Self, PpoError> {
        config.validate()?;
        if envs.is_empty() {
            return Err(PpoError::InvalidConfig(
                "at least one environment is required".into(),
            ));
        }
        let net = PolicyNet::new(net_config);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, 0));
        let params = net.init_params(&mut rng);
        let curiosity = (config.curiosity == CuriosityMode::Forward).then(|| {
            CuriosityModel::new(
                net.config.input_len(),
                net.config.continuous_dim,
                &net.config.branches,
                config.curiosity_encoding,
                config.curiosity_hidden,
                config.curiosity_strength,
                config.adam,
                derive_seed(seed, u64::MAX, 1),
            )
        });
        let workers = envs
            .into_iter()
            .map(|mut env| {
                let obs = env.reset().map_err(PpoError::Env)?;
                Ok(Worker { env, obs })
            })
            .collect::<Result<_, PpoError>>()?;
        Ok(Self {
            adam: Adam::new(net.n_params(), config.adam),
            net,
            params,
            config,
            curiosity,
            seed,
            step: 0,
            update: 0,
            last_summary_step: 0,
            pending_episodes: Vec::new(),
            workers,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn envs(&self) -> impl Iterator<Item = &E> {
        self.workers.iter().map(|w| &w.env)
    }

    /// Agent steps each worker runs per collection so the batch reaches `buffer_size`.
    pub fn steps_per_collection(&self) -> usize {
        let per_sweep: usize = self.workers.iter().map(|w| w.env.n_agents()).sum();
        self.config.buffer_size.div_ceil(per_sweep.max(1))
    }

    /// Collects one batch with the current parameters. All open segments are
    /// closed at the end, so no partial segment survives an update.
    pub fn collect(&mut self) -> Result<(Batch, Vec<EpisodeMetrics>), PpoError> {
        let steps = self.steps_per_collection();
        let (net, params, cfg, curiosity) = (
            &self.net,
            &self.params[..],
            &self.config,
            self.curiosity.as_ref(),
        );
        let (seed, update) = (self.seed, self.update);
        let results: Vec<Result<(Batch, Vec<EpisodeMetrics>), PpoError>> = self
            .workers
            .par_iter_mut()
            .enumerate()
            .map(|(w, worker)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, update, w as u64));
                run_worker(worker, net, params, cfg, curiosity, steps, &mut rng)
            })
            .collect();
        let mut batch = Batch::default();
        let mut episodes = Vec::new();
        for r in results {
            let (b, e) = r?;
            batch.transitions.extend(b.transitions);
            batch.advantages.extend(b.advantages);
            batch.returns.extend(b.returns);
            batch.train_rewards.extend(b.train_rewards);
            episodes.extend(e);
        }
        Ok((batch, episodes))
    }

    /// Collect, then update.
    pub fn iterate(&mut self) -> Result<IterationReport, PpoError> {
        let (batch, episodes) = self.collect()?;
        self.step += batch.len() as u64;
        let lr = self.config.learning_rate_at(self.step);
        let stats = update(
            &self.net,
            &mut self.params,
            &mut self.adam,
            self.curiosity.as_mut(),
            &batch,
            &self.config,
            lr,
            derive_seed(self.seed, self.update, u64::MAX),
            self.update,
        )?;
        self.update += 1;
        self.pending_episodes.extend(episodes.iter().cloned());
        Ok(IterationReport {
            stats,
            episodes,
            step: self.step,
        })
    }

    /// Returns a summary once `summary_freq` agent steps have passed since the previous one.
    pub fn take_summary(&mut self, summary_freq: u64, stats: &TrainStats) -> Option<SummaryRecord> {
        if self.step - self.last_summary_step < summary_freq.max(1) {
            return None;
        }
        self.last_summary_step = self.step;
        let episodes = std::mem::take(&mut self.pending_episodes);
        Some(SummaryRecord {
            step: self.step,
            update: self.update,
            episodes: episodes.len(),
            metrics: mean_metrics(&episodes),
            stats: stats.clone(),
        })
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            seed: self.seed,
            step: self.step,
            update: self.update,
            last_summary_step: self.last_summary_step,
            pending_episodes: self.pending_episodes.clone(),
            net_config: self.net.config.clone(),
            ppo_config: self.config.clone(),
            adam: self.adam.clone(),
            curiosity: self.curiosity.clone(),
            env_states: self.workers.iter().map(|w| w.env.snapshot()).collect(),
            obs_bits: self
                .workers
                .iter()
                .map(|w| {
                    w.obs
                        .iter()
                        .map(|o| o.iter().map(|v| v.to_bits()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Rebuilds a trainer from saved state; `envs` must be constructed the same way as the original.
    pub fn from_state(
        state: TrainerState,
        params: Vec<f32>,
        envs: Vec<E>,
    ) -> Result<Self, PpoError> {
        state.ppo_config.validate()?;
        if envs.len() != state.env_states.len() || envs.len() != state.obs_bits.len() {
            return Err(PpoError::State(format!(
                "state has {} workers, {} environments supplied",
                state.env_states.len(),
                envs.len()
            )));
        }
        let net = PolicyNet::new(state.net_config);
        if params.len() != net.n_params() || state.adam.len() != net.n_params() {
            return Err(PpoError::State(
                "parameter count does not match network config".into(),
            ));
        }
        let mut workers = Vec::with_capacity(envs.len());
        for ((mut env, s), obs) in envs.into_iter().zip(&state.env_states).zip(state.obs_bits) {
            env.restore(s).map_err(PpoError::State)?;
            let obs = obs
                .into_iter()
                .map(|o| o.into_iter().map(f32::from_bits).collect())
                .collect();
            workers.push(Worker { env, obs });
        }
        Ok(Self {
            net,
            params,
            adam: state.adam,
            config: state.ppo_config,
            curiosity: state.curiosity,
            seed: state.seed,
            step: state.step,
            update: state.update,
            last_summary_step: state.last_summary_step,
            pending_episodes: state.pending_episodes,
            workers,
        })
    }

    /// Writes `ckpt-NNNNNN.bin` with its sidecar and trainer state into
    /// `dir`, then prunes all but the newest `keep` checkpoints.
    pub fn save(
        &self,
        dir: &Path,
        keep: usize,
        extra: &serde_json::Value,
    ) -> Result<PathBuf, PpoError> {
        fs::create_dir_all(dir)?;
        let stem = format!("ckpt-{:06}", self.update);
        let bin = dir.join(format!("{stem}.bin"));
        save_checkpoint(&bin, &self.net.config, &self.params)?;
        let meta = CheckpointMeta {
            config_hash: format!("{:016x}", config_hash(&self.net.config)),
            net: self.net.config.clone(),
            step: self.step,
            update: self.update,
            extra: extra.clone(),
        };
        write_json(&dir.join(format!("{stem}.json")), &meta)?;
        write_json(&dir.join(format!("{stem}.state.json")), &self.state())?;
        let all = list_checkpoints(dir)?;
        for (_, old) in all.iter().take(all.len().saturating_sub(keep.max(1))) {
            for suffix in ["bin", "json", "state.json"] {
                let p = old.with_extension(suffix);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
        Ok(bin)
    }

    /// Restores the newest checkpoint in `dir`.
    pub fn resume(dir: &Path, envs: Vec<E>) -> Result<Self, PpoError> {
        let (_, bin) = list_checkpoints(dir)?
            .pop()
            .ok_or_else(|| PpoError::State(format!("no checkpoint in {}", dir.display())))?;
        let state: TrainerState = read_json(&bin.with_extension("state.json"))?;
        let params = load_checkpoint(&bin, &state.net_config)?;
        Self::from_state(state, params, envs)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PpoError> {
    let bytes = serde_json::to_vec(value).map_err(|e| PpoError::State(e.to_string()))?;
    Ok(write_atomic(path, &bytes)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PpoError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PpoError::State(format!("{}: {e}", path.display())))
}

/// Reads a checkpoint's sidecar.
pub fn read_checkpoint_meta(bin: &Path) -> Result<CheckpointMeta, PpoError> {
    read_json(&bin.with_extension("json"))
}

/// `(update, path)` of every `ckpt-*.bin` in `dir`, oldest first.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>, PpoError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(n) = name
            .strip_prefix("ckpt-")
            .and_then(|r| r.strip_suffix(".bin"))
        {
            if let Ok(u) = n.parse() {
                out.push((u, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn mean_metrics(episodes: &[EpisodeMetrics]) -> EpisodeMetrics {
    let mut sums = EpisodeMetrics::new();
    for e in episodes {
        for (k, v) in e {
            *sums.entry(k.clone()).or_default() += v;
        }
    }
    let n = episodes.len().max(1) as f64;
    sums.values_mut().for_each(|v| *v /= n);
    sums
}

fn run_worker<E: TrainEnv>(
    worker: &mut Worker<E>,
    net: &PolicyNet,
    params: &[f32],
    cfg: &PpoConfig,
    curiosity: Option<&CuriosityModel>,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Batch, Vec<EpisodeMetrics>), PpoError> {
    let nc = &net.config;
    let n = worker.env.n_agents();
    let mut buffer = RolloutBuffer::new(n);
    let mut episodes = Vec::new();
    let intrinsic = |t: &Transition| curiosity.map_or(0.0, |c| c.intrinsic_for(t));
    let finish = |buffer: &mut RolloutBuffer, a: usize, boot: f64, terminal: bool| {
        buffer.finish_segment(
            a,
            boot,
            terminal,
            cfg.gamma,
            cfg.lambda,
            cfg.extrinsic_strength,
            intrinsic,
        )
    };
    for _ in 0..steps {
        let mut pending = Vec::with_capacity(n);
        let mut continuous = Vec::with_capacity(n);
        let mut discrete = Vec::with_capacity(n);
        for a in 0..n {
            let out = net.forward(params, &worker.obs[a])?;
            if buffer.segment_len(a) >= cfg.time_horizon {
                finish(&mut buffer, a, out.value as f64, false)?;
            }
            let s = sample_action(&out, nc.continuous_dist, &nc.branches, rng);
            let raw: Vec<f32> = s.raw.iter().map(|&v| v as f32).collect();
            let lp = log_prob(&out, nc.continuous_dist, &nc.branches, &raw, &s.discrete);
            continuous.push(
                raw.iter()
                    .map(|&v| nc.continuous_dist.squash(v as f64))
                    .collect(),
            );
            discrete.push(s.discrete.clone());
            pending.push((raw, s.discrete, lp, out.value));
        }
        let result = worker
            .env
            .step(&continuous, &discrete)
            .map_err(PpoError::Env)?;
        if result.next_obs.len() != n || result.rewards.len() != n {
            return Err(PpoError::LengthMismatch {
                what: "env step",
                expected: n,
                got: result.rewards.len().min(result.next_obs.len()),
            });
        }
        for (a, (raw, disc, lp, value)) in pending.into_iter().enumerate() {
            let obs = std::mem::take(&mut worker.obs[a]);
            buffer.push(
                a,
                Transition {
                    obs,
                    raw,
                    discrete: disc,
                    log_prob: lp,
                    value,
                    reward: result.rewards[a],
                    next_obs: curiosity.map(|_| result.next_obs[a].clone()),
                },
            );
        }
        if result.episode_end {
            for a in 0..n {
                let boot = if result.terminal {
                    0.0
                } else {
                    net.forward(params, &result.next_obs[a])?.value as f64
                };
                finish(&mut buffer, a, boot, result.terminal)?;
            }
            episodes.extend(result.metrics);
            worker.obs = worker.env.reset().map_err(PpoError::Env)?;
        } else {
            worker.obs = result.next_obs;
        }
    }
    for a in 0..n {
        if buffer.segment_len(a) > 0 {
            let boot = net.forward(params, &worker.obs[a])?.value as f64;
            finish(&mut buffer, a, boot, false)?;
        }
    }
    Ok((buffer.take_batch(), episodes))
}
