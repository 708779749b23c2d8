//! Per-step trajectory CSV and per-episode JSONL summaries.

use std::fmt::Write as _;

use super::{EnvState, EpisodeSummary, StepResult};

pub const TRAJECTORY_HEADER: &str = "step,agent,x,y,z,battery,has_seed,drop_reward,return_reward,battery_penalty,event_penalty,dropped_seed,recharged,out_of_energy,saved_memory";

/// Accumulates trajectory rows in memory; callers decide where to write them.
#[derive(Debug, Clone)]
pub struct TrajectoryRecorder {
    csv: String,
    episodes: String,
}

impl Default for TrajectoryRecorder {
    fn default() -> Self {
        Self::new()
    }
}

impl TrajectoryRecorder {
    pub fn new() -> Self {
        Self {
            csv: format!("{TRAJECTORY_HEADER}\n"),
            episodes: String::new(),
        }
    }

    /// Appends one row per agent for the state reached by `result`.
    pub fn record(&mut self, state: &EnvState, result: &StepResult) {
        for (i, (d, (r, e))) in state
            .drones
            .iter()
            .zip(result.rewards.iter().zip(&result.events.agents))
            .enumerate()
        {
            let _ = writeln!(
                self.csv,
                "{},{i},{:.4},{:.4},{:.4},{:.6},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
                state.step,
                d.position[0],
                d.position[1],
                d.position[2],
                d.battery(),
                u8::from(d.has_seed),
                r.drop_reward,
                r.return_reward,
                r.battery_penalty,
                r.event_penalty,
                u8::from(e.dropped_seed),
                u8::from(e.recharged),
                u8::from(e.out_of_energy),
                u8::from(e.saved_memory),
            );
        }
    }

    pub fn record_episode(&mut self, episode: u64, scenario_seed: u64, summary: &EpisodeSummary) {
        let line = serde_json::json!({
            "episode": episode,
            "scenario_seed": scenario_seed,
            "summary": summary,
        });
        let _ = writeln!(self.episodes, "{line}");
    }

    pub fn trajectory_csv(&self) -> &str {
        &self.csv
    }

    pub fn episodes_jsonl(&self) -> &str {
        &self.episodes
    }
}
