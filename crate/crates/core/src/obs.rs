//! Normalized vector observations, the 16x16 downward camera and frame stacking.
//!
//! Vector layout (`Full21`, indices):
//!
//! | idx    | field                                     | range    |
//! |--------|-------------------------------------------|----------|
//! | 0      | ground distance / max_altitude            | [0, 1]   |
//! | 1..4   | position / half extent                    | [-1, 1]  |
//! | 4..7   | movement direction, `(v + 1) / 2`         | [0, 1]   |
//! | 7..10  | vector to station / half extent           | [-1, 1]  |
//! | 10     | has seed                                  | {0, 1}   |
//! | 11     | battery                                   | [0, 1]   |
//! | 12..21 | inbox slots 1..3 locations / half extent  | [-1, 1]  |
//!
//! `Paper15` keeps indices 0..12 and replaces the nine inbox scalars with
//! three: `1 - d / diagonal` for the horizontal distance `d` from the drone
//! to each received location, 0 for an empty slot.

use serde::{Deserialize, Serialize};

use crate::comms::INBOX_SLOTS;
use crate::env::{DroneState, EnvState};
use crate::terrain::{Forest, Scenario};

pub const VISUAL_SIDE: usize = 16;
pub const VISUAL_CELLS: usize = VISUAL_SIDE * VISUAL_SIDE;
/// Trees closer than this to a cell center light the cell up even when the
/// cell is smaller.
pub const TREE_CROWN_RADIUS: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsLayout {
    Paper15,
    #[default]
    Full21,
}

impl ObsLayout {
    pub fn vector_len(self) -> usize {
        match self {
            ObsLayout::Paper15 => 15,
            ObsLayout::Full21 => 21,
        }
    }

    /// Two stacked vector frames.
    pub fn stacked_len(self) -> usize {
        2 * self.vector_len()
    }

    /// Stacked vector plus one visual frame.
    pub fn total_len(self) -> usize {
        self.stacked_len() + VISUAL_CELLS
    }
}

pub type VectorObs = Vec<f32>;
pub type VisualObs = Vec<f32>;

/// `[previous vector ‖ current vector]` followed by the current visual frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedObs {
    pub vector: Vec<f32>,
    pub visual: VisualObs,
}

impl StackedObs {
    pub fn flat(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.vector.len() + self.visual.len());
        v.extend_from_slice(&self.vector);
        v.extend_from_slice(&self.visual);
        v
    }

    pub fn len(&self) -> usize {
        self.vector.len() + self.visual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn unit(v: f64) -> f32 {
    v.clamp(-1.0, 1.0) as f32
}

pub fn build_vector_obs(d: &DroneState, scenario: &Scenario, layout: ObsLayout) -> VectorObs {
    let half = scenario.half_extent();
    let station = scenario.station;
    let ground = scenario.ground_height(d.position[0], d.position[2]);
    let mut v = Vec::with_capacity(layout.vector_len());

    v.push(((d.position[1] - ground) / scenario.config.max_altitude).clamp(0.0, 1.0) as f32);
    v.extend(d.position.iter().map(|p| unit(p / half)));
    let speed = d.velocity.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.extend(d.velocity.iter().map(|c| {
        let dir = if speed > 0.0 { c / speed } else { 0.0 };
        ((dir + 1.0) / 2.0).clamp(0.0, 1.0) as f32
    }));
    v.extend((0..3).map(|k| unit((station[k] - d.position[k]) / half)));
    v.push(if d.has_seed { 1.0 } else { 0.0 });
    v.push(d.battery().clamp(0.0, 1.0) as f32);

    match layout {
        ObsLayout::Full21 => {
            for slot in &d.inbox {
                match slot {
                    Some(m) => v.extend(m.iter().map(|c| unit(c / half))),
                    None => v.extend([0.0; 3]),
                }
            }
        }
        ObsLayout::Paper15 => {
            let diagonal = 2.0 * half * std::f64::consts::SQRT_2;
            for slot in &d.inbox {
                v.push(match slot {
                    Some(m) => {
                        let dist = ((m[0] - d.position[0]).powi(2)
                            + (m[2] - d.position[2]).powi(2))
                        .sqrt();
                        (1.0 - dist / diagonal).clamp(0.0, 1.0) as f32
                    }
                    None => 0.0,
                });
            }
        }
    }
    debug_assert_eq!(v.len(), layout.vector_len());
    debug_assert_eq!(INBOX_SLOTS, 3);
    v
}

/// Half-width of the square ground footprint seen from `ground_distance`
/// meters with a 120 degree field of view (`ground_distance * tan 60°`).
pub fn footprint_half_width(ground_distance: f64) -> f64 {
    ground_distance.max(0.0) * 3f64.sqrt()
}

/// Samples the footprint under the drone on a 16x16 yaw-aligned grid. Row 0
/// is the far edge ahead of the drone, column 0 its left edge. Each cell is
/// `min(0.5 * height / max_altitude, 0.5) + 0.5 * tree`, or 0 outside the world.
pub fn render_visual(d: &DroneState, scenario: &Scenario, forest: &Forest) -> VisualObs {
    let ground = scenario.ground_height(d.position[0], d.position[2]);
    let half_width = footprint_half_width(d.position[1] - ground);
    let cell = 2.0 * half_width / VISUAL_SIDE as f64;
    let tree_radius = (cell / 2.0).max(TREE_CROWN_RADIUS);
    let (fx, fz) = crate::env::heading(d.yaw);
    let (rx, rz) = (fz, -fx);
    let max_alt = scenario.config.max_altitude;

    let mut out = vec![0f32; VISUAL_CELLS];
    for row in 0..VISUAL_SIDE {
        let forward = half_width - (row as f64 + 0.5) * cell;
        for col in 0..VISUAL_SIDE {
            let right = -half_width + (col as f64 + 0.5) * cell;
            let x = d.position[0] + right * rx + forward * fx;
            let z = d.position[2] + right * rz + forward * fz;
            if !scenario.in_bounds(x, z) {
                continue;
            }
            let h = (0.5 * scenario.ground_height(x, z) / max_alt).clamp(0.0, 0.5);
            let tree = match forest.nearest_distance(x, z) {
                Some(dist) if dist <= tree_radius => 0.5,
                _ => 0.0,
            };
            out[row * VISUAL_SIDE + col] = (h + tree) as f32;
        }
    }
    out
}

pub fn stack(prev: &VectorObs, cur: &VectorObs, vis: VisualObs) -> StackedObs {
    let mut vector = Vec::with_capacity(prev.len() + cur.len());
    vector.extend_from_slice(prev);
    vector.extend_from_slice(cur);
    StackedObs {
        vector,
        visual: vis,
    }
}

/// Keeps each agent's previous vector frame between steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObsStacker {
    pub layout: ObsLayout,
    prev: Vec<Option<VectorObs>>,
}

impl ObsStacker {
    pub fn new(layout: ObsLayout, n_agents: usize) -> Self {
        Self {
            layout,
            prev: vec![None; n_agents],
        }
    }

    /// Forget history; the next observation bootstraps `prev := cur`.
    pub fn reset(&mut self) {
        self.prev.iter_mut().for_each(|p| *p = None);
    }

    /// Builds every agent's stacked observation and advances the history.
    pub fn observe(&mut self, scenario: &Scenario, state: &EnvState) -> Vec<StackedObs> {
        state
            .drones
            .iter()
            .zip(self.prev.iter_mut())
            .map(|(d, prev)| {
                let cur = build_vector_obs(d, scenario, self.layout);
                let vis = render_visual(d, scenario, &state.forest.0);
                let before = prev.replace(cur.clone()).unwrap_or_else(|| cur.clone());
                stack(&before, &cur, vis)
            })
            .collect()
    }
}
