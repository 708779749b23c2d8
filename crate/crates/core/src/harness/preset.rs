use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Held-out evaluation terrain shared by every preset.
pub const TEST_SEED: u64 = 111;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PresetName {
    #[serde(rename = "MA-0")]
    Ma0,
    #[serde(rename = "MA-0-99")]
    Ma0To99,
    #[serde(rename = "MAC-0")]
    Mac0,
    #[serde(rename = "MAC-0-99")]
    Mac0To99,
}

pub const PRESETS: [PresetName; 4] = [
    PresetName::Ma0,
    PresetName::Ma0To99,
    PresetName::Mac0,
    PresetName::Mac0To99,
];

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ma0 => "MA-0",
            Self::Ma0To99 => "MA-0-99",
            Self::Mac0 => "MAC-0",
            Self::Mac0To99 => "MAC-0-99",
        }
    }

    pub fn preset(self) -> ExperimentPreset {
        let communicates = matches!(self, Self::Mac0 | Self::Mac0To99);
        let train_seeds = match self {
            Self::Ma0 | Self::Mac0 => SeedSchedule::Fixed(0),
            Self::Ma0To99 | Self::Mac0To99 => SeedSchedule::Cycle {
                start: 0,
                count: 100,
            },
        };
        ExperimentPreset {
            name: self,
            n_agents: 10,
            max_neighbors: if communicates { 3 } else { 0 },
            train_seeds,
            test_seed: TEST_SEED,
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PRESETS
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = PRESETS.iter().map(|p| p.as_str()).collect();
                format!("unknown preset {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// Which scenario seed an episode trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSchedule {
    Fixed(u64),
    /// Episode `e` uses `start + e mod count`.
    Cycle {
        start: u64,
        count: u64,
    },
}

impl SeedSchedule {
    pub fn seed_for(self, episode: u64) -> u64 {
        match self {
            Self::Fixed(s) => s,
            Self::Cycle { start, count } => start + episode % count.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub n_agents: usize,
    pub max_neighbors: usize,
    pub train_seeds: SeedSchedule,
    pub test_seed: u64,
}

impl ExperimentPreset {
    pub fn communicates(&self) -> bool {
        self.max_neighbors > 0
    }
}
