//! Evaluation on a fixed scenario with deterministic greedy actions (or a
//! uniform random policy as a baseline).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{AgentAction, EnvConfig, TrajectoryRecorder};
use crate::nn::{greedy_action, PolicyNet};
use crate::obs::ObsLayout;
use crate::ppo::{derive_seed, EpisodeMetrics};
use crate::terrain::{generate_scenario, Scenario, ScenarioConfig};

use super::task::{decode_action, summary_metrics};
use super::{DroneTask, HarnessError, SeedSchedule};

/// Column order of evaluation tables.
pub const METRIC_COLUMNS: [&str; 7] = [
    "distance_reward",
    "station_bonus",
    "tree_drop_count",
    "cumulative_reward",
    "tree_drop_reward",
    "out_of_energy_count",
    "recharge_count",
];

#[derive(Clone, Copy)]
pub enum EvalPolicy<'a> {
    /// Mode of the policy: clamped means and per-branch argmax.
    Greedy {
        net: &'a PolicyNet,
        params: &'a [f32],
    },
    /// Uniform continuous actions in `[-1, 1]`, each branch 0/1 with probability 1/2.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    pub scenario: ScenarioConfig,
    pub env: EnvConfig,
    pub layout: ObsLayout,
    pub runs: usize,
    pub steps: u64,
    pub flight_path_steps: u64,
    /// Stream for the per-run spawn headings.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub run: usize,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario_seed: u64,
    pub runs: usize,
    pub steps: u64,
    pub rows: Vec<EvalRun>,
    pub mean: EpisodeMetrics,
    /// Standard error of the mean (sample standard deviation over `sqrt(runs)`).
    pub stderr: EpisodeMetrics,
    #[serde(skip)]
    pub flight_paths: Vec<String>,
}

impl EvalReport {
    pub fn from_rows(
        scenario_seed: u64,
        steps: u64,
        rows: Vec<EvalRun>,
        flight_paths: Vec<String>,
    ) -> Self {
        let mut mean = BTreeMap::new();
        let mut stderr = BTreeMap::new();
        let n = rows.len() as f64;
        if let Some(first) = rows.first() {
            for key in first.metrics.keys() {
                let vals: Vec<f64> = rows.iter().map(|r| r.metrics[key]).collect();
                let (m, se) = mean_stderr(&vals);
                mean.insert(key.clone(), m);
                stderr.insert(key.clone(), se);
            }
        }
        Self {
            scenario_seed,
            runs: n as usize,
            steps,
            rows,
            mean,
            stderr,
            flight_paths,
        }
    }

    /// One row per run, then `mean` and `stderr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = format!("run,{}\n", METRIC_COLUMNS.join(","));
        let mut row = |label: &str, m: &EpisodeMetrics| {
            let vals: Vec<String> = METRIC_COLUMNS
                .iter()
                .map(|c| format!("{:.6}", m.get(*c).copied().unwrap_or(f64::NAN)))
                .collect();
            let _ = writeln!(s, "{label},{}", vals.join(","));
        };
        for r in &self.rows {
            row(&r.run.to_string(), &r.metrics);
        }
        row("mean", &self.mean);
        row("stderr", &self.stderr);
        s
    }
}

/// Mean and standard error; the error is 0 for fewer than two values.
pub fn mean_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `setup.runs` independent episodes of `setup.steps` steps on one
/// scenario. Runs differ only in their spawn headings (and, for the random
/// policy, their action stream).
pub fn evaluate(setup: &EvalSetup, policy: EvalPolicy<'_>) -> Result<EvalReport, HarnessError> {
    let scenario = Arc::new(generate_scenario(&setup.scenario)?);
    evaluate_on(scenario, setup, policy)
}

pub fn evaluate_on(
    scenario: Arc<Scenario>,
    setup: &EvalSetup,
    policy: EvalPolicy<'_>,
) -> Result<EvalReport, HarnessError> {
    let env = EnvConfig {
        episode_length: setup.steps,
        ..setup.env.clone()
    };
    let results: Vec<Result<(EvalRun, String), HarnessError>> = (0..setup.runs)
        .into_par_iter()
        .map(|run| {
            let mut task = DroneTask::with_scenario(
                Arc::clone(&scenario),
                setup.scenario.clone(),
                env.clone(),
                setup.layout,
                SeedSchedule::Fixed(setup.scenario.seed),
                derive_seed(setup.seed, run as u64, 7),
            )?;
            let mut obs = task.start_episode()?;
            let mut rng = match policy {
                EvalPolicy::Random { seed } => {
                    Some(ChaCha8Rng::seed_from_u64(derive_seed(seed, run as u64, 11)))
                }
                EvalPolicy::Greedy { .. } => None,
            };
            let mut rec = TrajectoryRecorder::new();
            for step in 0..setup.steps {
                let actions = act(&policy, rng.as_mut(), &obs)?;
                let (r, next) = task.step_actions(&actions)?;
                if step < setup.flight_path_steps {
                    rec.record(&task.env.state, &r);
                }
                obs = next;
            }
            let metrics = summary_metrics(&task.env.episode_summary());
            Ok((EvalRun { run, metrics }, rec.trajectory_csv().to_string()))
        })
        .collect();
    let mut rows = Vec::with_capacity(setup.runs);
    let mut paths = Vec::with_capacity(setup.runs);
    for r in results {
        let (row, path) = r?;
        rows.push(row);
        paths.push(path);
    }
    Ok(EvalReport::from_rows(
        setup.scenario.seed,
        setup.steps,
        rows,
        paths,
    ))
}

fn act(
    policy: &EvalPolicy<'_>,
    rng: Option<&mut ChaCha8Rng>,
    obs: &[Vec<f32>],
) -> Result<Vec<AgentAction>, HarnessError> {
    match (policy, rng) {
        (EvalPolicy::Greedy { net, params }, _) => obs
            .iter()
            .map(|o| {
                let out = net.forward(params, o)?;
                let (c, d) = greedy_action(&out, net.config.continuous_dist, &net.config.branches);
                Ok(decode_action(&c, &d))
            })
            .collect(),
        (EvalPolicy::Random { .. }, Some(rng)) => Ok(obs
            .iter()
            .map(|_| AgentAction {
                movement: [
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                ],
                drop_seed: rng.random_bool(0.5),
                save_location: rng.random_bool(0.5),
            })
            .collect()),
        (EvalPolicy::Random { .. }, None) => unreachable!("random policy always has an rng"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_matches_hand_computation() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn report_has_one_row_per_run_plus_aggregate() {
        let setup = EvalSetup {
            scenario: ScenarioConfig {
                world_extent: 300.0,
                grid_resolution: 61,
                ..ScenarioConfig::default()
            },
            env: EnvConfig {
                n_drones: 2,
                ..EnvConfig::default()
            },
            layout: ObsLayout::Full21,
            runs: 3,
            steps: 20,
            flight_path_steps: 10,
            seed: 0,
        };
        let a = evaluate(&setup, EvalPolicy::Random { seed: 1 }).unwrap();
        let b = evaluate(&setup, EvalPolicy::Random { seed: 1 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.to_csv().lines().count(), 1 + 3 + 2);
        assert_eq!(a.flight_paths[0].lines().count(), 1 + 10 * 2);
    }
}
