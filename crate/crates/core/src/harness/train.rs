//! Training orchestration: worker construction, append-only metrics and
//! checkpoint cadence.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ppo::{
    derive_seed, list_checkpoints, EpisodeMetrics, SummaryRecord, TrainStats, Trainer,
};
use crate::terrain::generate_scenario;

use super::{DroneTask, ExperimentConfig, HarnessError, PresetName};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const THREADS_ENV: &str = "REFOREST_THREADS";

/// Build identifier stamped on metrics: `REFOREST_GIT_HASH` at compile time,
/// else the crate version.
pub fn build_id() -> &'static str {
    option_env!("REFOREST_GIT_HASH").unwrap_or(env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsBody {
    Update {
        stats: TrainStats,
        episodes: usize,
    },
    Summary {
        episodes: usize,
        metrics: EpisodeMetrics,
    },
    Checkpoint {
        path: String,
    },
}

/// One JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub update: u64,
    pub preset: PresetName,
    pub seed: u64,
    pub config_hash: String,
    pub build: String,
    #[serde(flatten)]
    pub body: MetricsBody,
}

/// Appends records to a JSONL file, never truncating it.
pub struct MetricsLog {
    out: BufWriter<File>,
    preset: PresetName,
    seed: u64,
    config_hash: String,
}

impl MetricsLog {
    pub fn open(path: &Path, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(f),
            preset: cfg.preset,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        })
    }

    pub fn write(&mut self, step: u64, update: u64, body: MetricsBody) -> Result<(), HarnessError> {
        let rec = MetricsRecord {
            step,
            update,
            preset: self.preset,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            build: build_id().to_string(),
            body,
        };
        serde_json::to_writer(&mut self.out, &rec).map_err(|e| HarnessError::Io(e.into()))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Csv {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Rayon pool capped by `REFOREST_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            HarnessError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Config(e.to_string()))
}

/// One environment per `train.n_envs`, each following the preset's seed
/// schedule with its own spawn stream.
pub fn build_tasks(cfg: &ExperimentConfig) -> Result<Vec<DroneTask>, HarnessError> {
    let schedule = cfg.preset_info().train_seeds;
    let first = Arc::new(generate_scenario(&crate::terrain::ScenarioConfig {
        seed: schedule.seed_for(0),
        ..cfg.scenario.clone()
    })?);
    (0..cfg.train.n_envs)
        .map(|w| {
            DroneTask::with_scenario(
                Arc::clone(&first),
                cfg.scenario.clone(),
                cfg.env.clone(),
                cfg.obs.layout,
                schedule,
                derive_seed(cfg.seed, w as u64, 2),
            )
        })
        .collect()
}

pub fn new_trainer(cfg: &ExperimentConfig) -> Result<Trainer<DroneTask>, HarnessError> {
    Ok(Trainer::new(
        cfg.net.clone(),
        cfg.ppo.clone(),
        build_tasks(cfg)?,
        cfg.seed,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub step: u64,
    pub update: u64,
    pub resumed_from: Option<u64>,
    pub summaries: Vec<SummaryRecord>,
    pub last_checkpoint: Option<PathBuf>,
}

fn done(t: &Trainer<DroneTask>, cfg: &ExperimentConfig) -> bool {
    cfg.train.max_updates.is_some_and(|m| t.update >= m) || t.step >= cfg.ppo.max_steps
}

/// Trains into `out_dir` (checkpoints, `metrics.jsonl`, `config.toml`),
/// resuming from the newest checkpoint there if one exists. A checkpoint is
/// written at every summary and at the end.
pub fn run_training(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    let existing = if ckpt_dir.is_dir() {
        list_checkpoints(&ckpt_dir)?
    } else {
        Vec::new()
    };
    let (mut trainer, resumed_from) = match existing.last() {
        Some((u, bin)) => {
            let meta = crate::ppo::read_checkpoint_meta(bin)?;
            let saved = meta
                .extra
                .get("resume_hash")
                .and_then(|v| v.as_str())
                .unwrap_or_default();
            if saved != cfg.resume_hash() {
                return Err(HarnessError::Config(format!(
                    "{} holds checkpoints of a different experiment ({saved} vs {})",
                    out_dir.display(),
                    cfg.resume_hash()
                )));
            }
            (Trainer::resume(&ckpt_dir, build_tasks(cfg)?)?, Some(*u))
        }
        None => (new_trainer(cfg)?, None),
    };
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml_string())?;
    let mut log = MetricsLog::open(&out_dir.join(METRICS_FILE), cfg)?;
    let extra = serde_json::json!({
        "config_hash": cfg.hash(),
        "resume_hash": cfg.resume_hash(),
        "preset": cfg.preset,
        "seed": cfg.seed,
        "layout": cfg.obs.layout,
    });
    let pool = thread_pool()?;
    let mut summaries = Vec::new();
    let mut last_checkpoint = None;
    while !done(&trainer, cfg) {
        let report = pool.install(|| trainer.iterate())?;
        log.write(
            report.step,
            trainer.update,
            MetricsBody::Update {
                stats: report.stats.clone(),
                episodes: report.episodes.len(),
            },
        )?;
        let finished = done(&trainer, cfg);
        let summary = trainer.take_summary(cfg.train.summary_freq, &report.stats);
        if let Some(s) = &summary {
            log.write(
                s.step,
                s.update,
                MetricsBody::Summary {
                    episodes: s.episodes,
                    metrics: s.metrics.clone(),
                },
            )?;
            summaries.push(s.clone());
        }
        if summary.is_some() || finished {
            let p = trainer.save(&ckpt_dir, cfg.train.keep_checkpoints, &extra)?;
            log.write(
                trainer.step,
                trainer.update,
                MetricsBody::Checkpoint {
                    path: p.display().to_string(),
                },
            )?;
            last_checkpoint = Some(p);
        }
    }
    Ok(TrainOutcome {
        step: trainer.step,
        update: trainer.update,
        resumed_from,
        summaries,
        last_checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::load_checkpoint;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_preset(PresetName::Mac0To99);
        cfg.scenario.world_extent = 300.0;
        cfg.scenario.grid_resolution = 61;
        cfg.env.n_drones = 2;
        cfg.env.episode_length = 30;
        cfg.net.channels = vec![2, 2, 2];
        cfg.net.hidden_units = 8;
        cfg.net.num_layers = 1;
        cfg.ppo.buffer_size = 40;
        cfg.ppo.batch_size = 20;
        cfg.ppo.num_epochs = 1;
        cfg.train.summary_freq = 80;
        cfg.train.max_updates = Some(4);
        cfg
    }

    #[test]
    fn interrupted_run_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let full = run_training(&cfg, &dir.path().join("a")).unwrap();
        assert_eq!(full.update, 4);
        assert!(!full.summaries.is_empty());
        let mut half = cfg.clone();
        half.train.max_updates = Some(2);
        let b = dir.path().join("b");
        assert_eq!(run_training(&half, &b).unwrap().update, 2);
        let rest = run_training(&cfg, &b).unwrap();
        assert_eq!(rest.resumed_from, Some(2));
        let updates = |d: &Path| -> Vec<(u64, TrainStats)> {
            read_metrics(&d.join(METRICS_FILE))
                .unwrap()
                .into_iter()
                .filter_map(|r| match r.body {
                    MetricsBody::Update { stats, .. } => Some((r.update, stats)),
                    _ => None,
                })
                .collect()
        };
        assert_eq!(updates(&dir.path().join("a")), updates(&b));
        let mut other = cfg.clone();
        other.seed = 9;
        assert!(matches!(
            run_training(&other, &b),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn metrics_records_carry_identity() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        run_training(&cfg, dir.path()).unwrap();
        let recs = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
        assert!(recs
            .iter()
            .all(|r| r.preset == PresetName::Mac0To99 && r.config_hash == cfg.hash()));
        assert_eq!(
            recs.iter()
                .filter(|r| matches!(r.body, MetricsBody::Update { .. }))
                .count(),
            4
        );
        let (_, bin) = list_checkpoints(&dir.path().join("checkpoints"))
            .unwrap()
            .pop()
            .unwrap();
        assert_eq!(
            load_checkpoint(&bin, &cfg.net).unwrap().len(),
            crate::nn::PolicyNet::new(cfg.net.clone()).n_params()
        );
    }
}
