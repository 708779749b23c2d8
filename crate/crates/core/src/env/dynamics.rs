//! Per-drone transition pieces: kinematics, battery, seed drop, return
//! shaping and station servicing.

use serde::{Deserialize, Serialize};

use crate::terrain::{proximity_factor, Forest, Scenario};

use super::EnvConfig;

/// Battery capacity in integer units. Depletion is exact integer arithmetic.
pub const BATTERY_UNITS: u32 = 1_000_000;

/// Base of the drop reward before the station-distance bonus.
pub const DROP_BASE_REWARD: f64 = 20.0;
/// Largest station-distance bonus added to a drop.
pub const DROP_STATION_BONUS: f64 = 10.0;
/// Total return shaping granted over one return phase.
pub const RETURN_REWARD_TOTAL: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DroneStatus {
    Active,
    OutOfEnergy,
}

/// Progress bookkeeping of a seedless flight back to the station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnPhase {
    /// Horizontal distance to the station when the phase began.
    pub start_distance: f64,
    /// Smallest horizontal distance reached since then.
    pub best_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    /// `(x, y, z)`, `y` is altitude.
    pub position: [f64; 3],
    /// Degrees in `[0, 360)`, 0 faces `+z`, 90 faces `+x`.
    pub yaw: f64,
    /// Displacement applied by the last kinematics update.
    pub velocity: [f64; 3],
    pub battery_units: u32,
    pub has_seed: bool,
    pub memory: Option<[f64; 3]>,
    pub inbox: crate::comms::Inbox,
    pub return_phase: Option<ReturnPhase>,
    pub status: DroneStatus,
}

impl DroneState {
    pub fn spawned(position: [f64; 3], yaw: f64) -> Self {
        Self {
            position,
            yaw,
            velocity: [0.0; 3],
            battery_units: BATTERY_UNITS,
            has_seed: true,
            memory: None,
            inbox: [None; crate::comms::INBOX_SLOTS],
            return_phase: None,
            status: DroneStatus::Active,
        }
    }

    pub fn battery(&self) -> f64 {
        f64::from(self.battery_units) / f64::from(BATTERY_UNITS)
    }

    pub fn is_active(&self) -> bool {
        self.status == DroneStatus::Active
    }
}

pub fn horizontal_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit heading on the ground plane for a yaw in degrees, as `(dx, dz)`.
pub fn heading(yaw_deg: f64) -> (f64, f64) {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    (s, c)
}

/// Turns by `turn_speed * a[1]`, moves `move_speed * a[0]` along the new
/// heading and `move_speed * a[2]` vertically, then clamps into the world and
/// the altitude band above the local ground.
pub fn apply_kinematics(
    d: &mut DroneState,
    action: [f64; 3],
    scenario: &Scenario,
    config: &EnvConfig,
) {
    let [fwd, rot, up] = action.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) });
    d.yaw = (d.yaw + config.turn_speed * rot).rem_euclid(360.0);
    let (hx, hz) = heading(d.yaw);
    let step = config.move_speed * fwd;
    let half = scenario.half_extent();
    let before = d.position;
    let x = (before[0] + hx * step).clamp(-half, half);
    let z = (before[2] + hz * step).clamp(-half, half);
    let floor = scenario.ground_height(x, z) + config.altitude_clearance;
    let ceiling = config.altitude_ceiling.max(floor);
    let y = (before[1] + config.move_speed * up).clamp(floor, ceiling);
    d.position = [x, y, z];
    d.velocity = [x - before[0], y - before[1], z - before[2]];
}

/// Removes one step of charge and returns the (negative) battery reward.
/// Marks the drone `OutOfEnergy` when the charge reaches zero.
pub fn deplete_battery(d: &mut DroneState, config: &EnvConfig) -> f64 {
    let (units, rate) = if d.has_seed {
        (
            config.depletion_units_with_seed(),
            config.depletion_with_seed,
        )
    } else {
        (
            config.depletion_units_without_seed(),
            config.depletion_without_seed,
        )
    };
    d.battery_units = d.battery_units.saturating_sub(units);
    if d.battery_units == 0 {
        d.status = DroneStatus::OutOfEnergy;
    }
    -rate
}

/// Reward terms of a successful drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropOutcome {
    pub reward: f64,
    pub proximity: f64,
    pub station_factor: f64,
    /// The part of `reward` contributed by the station-distance bonus.
    pub station_bonus: f64,
}

/// `pf * (20 + 10 * sf)` for a drop at `drop_pos`, where `pf` is the
/// proximity factor of the nearest existing tree and `sf` the horizontal
/// station distance over `station_bonus_distance`, clamped to `[0, 1]`.
pub fn drop_seed_reward(
    drop_pos: [f64; 3],
    forest: &Forest,
    station: [f64; 3],
    station_bonus_distance: f64,
) -> DropOutcome {
    let pf = forest
        .nearest_distance(drop_pos[0], drop_pos[2])
        .map_or(0.0, proximity_factor);
    let sf = (horizontal_distance(drop_pos, station) / station_bonus_distance).clamp(0.0, 1.0);
    DropOutcome {
        reward: pf * (DROP_BASE_REWARD + DROP_STATION_BONUS * sf),
        proximity: pf,
        station_factor: sf,
        station_bonus: pf * DROP_STATION_BONUS * sf,
    }
}

/// Telescoping progress reward toward the station. Only improvements on the
/// best distance so far pay, so a phase never pays more than 20 in total.
pub fn return_shaping_reward(d: &mut DroneState, station: [f64; 3]) -> f64 {
    let Some(phase) = d.return_phase.as_mut() else {
        return 0.0;
    };
    if d.has_seed || d.status != DroneStatus::Active || !(phase.start_distance > 0.0) {
        return 0.0;
    }
    let dist = horizontal_distance(d.position, station);
    let gain = (phase.best_distance - dist).max(0.0);
    phase.best_distance = phase.best_distance.min(dist);
    RETURN_REWARD_TOTAL * gain / phase.start_distance
}

/// Recharges and reloads a seedless drone at the station. Returns the residual
/// return increment (`20 * best / start`) and closes the return phase. A
/// drone that already holds a seed is left untouched and earns nothing.
pub fn service_at_station(d: &mut DroneState) -> Option<f64> {
    if d.has_seed {
        return None;
    }
    let residual = d.return_phase.take().map_or(0.0, |p| {
        if p.start_distance > 0.0 {
            RETURN_REWARD_TOTAL * p.best_distance / p.start_distance
        } else {
            0.0
        }
    });
    d.battery_units = BATTERY_UNITS;
    d.has_seed = true;
    Some(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_scenario, ScenarioConfig};

    fn flat_scenario() -> Scenario {
        let mut c = ScenarioConfig::new(0, 1);
        c.world_extent = 1200.0;
        let mut s = generate_scenario(&c).unwrap();
        s.heights.cells.iter_mut().for_each(|h| *h = 0.0);
        s
    }

    fn drone_at(p: [f64; 3]) -> DroneState {
        DroneState::spawned(p, 0.0)
    }

    #[test]
    fn forward_moves_one_meter_along_heading() {
        let s = flat_scenario();
        let cfg = EnvConfig::default();
        let mut d = drone_at([0.0, 50.0, 0.0]);
        apply_kinematics(&mut d, [1.0, 0.0, 0.0], &s, &cfg);
        assert_eq!(d.position, [0.0, 50.0, 1.0]);
        let mut d = drone_at([0.0, 50.0, 0.0]);
        d.yaw = 90.0;
        apply_kinematics(&mut d, [1.0, 0.0, 0.0], &s, &cfg);
        assert!((d.position[0] - 1.0).abs() < 1e-12 && d.position[2].abs() < 1e-12);
    }

    #[test]
    fn rotate_turns_five_degrees_and_wraps() {
        let s = flat_scenario();
        let cfg = EnvConfig::default();
        let mut d = drone_at([0.0, 50.0, 0.0]);
        apply_kinematics(&mut d, [0.0, 1.0, 0.0], &s, &cfg);
        assert_eq!(d.yaw, 5.0);
        assert_eq!(d.position, [0.0, 50.0, 0.0]);
        d.yaw = 357.0;
        apply_kinematics(&mut d, [0.0, 1.0, 0.0], &s, &cfg);
        assert!((d.yaw - 2.0).abs() < 1e-12);
        apply_kinematics(&mut d, [0.0, -1.0, 0.0], &s, &cfg);
        assert!((d.yaw - 357.0).abs() < 1e-9);
    }

    #[test]
    fn zero_action_keeps_pose() {
        let s = flat_scenario();
        let cfg = EnvConfig::default();
        let mut d = drone_at([12.0, 40.0, -3.0]);
        d.yaw = 33.0;
        let before = d.clone();
        apply_kinematics(&mut d, [0.0, 0.0, 0.0], &s, &cfg);
        assert_eq!(d.position, before.position);
        assert_eq!(d.yaw, before.yaw);
    }

    #[test]
    fn out_of_range_actions_are_clamped_and_bounds_hold() {
        let s = flat_scenario();
        let cfg = EnvConfig::default();
        let mut d = drone_at([599.5, 149.5, 0.0]);
        d.yaw = 90.0;
        apply_kinematics(&mut d, [7.0, 0.0, 9.0], &s, &cfg);
        assert_eq!(d.position[0], 600.0);
        assert_eq!(d.position[1], 150.0);
        let mut d = drone_at([0.0, 2.5, 0.0]);
        apply_kinematics(&mut d, [0.0, 0.0, -1.0], &s, &cfg);
        assert_eq!(d.position[1], 2.0);
    }

    #[test]
    fn battery_lasts_exactly_1000_and_2000_steps() {
        let cfg = EnvConfig::default();
        for (has_seed, expected) in [(true, 1000), (false, 2000)] {
            let mut d = drone_at([0.0; 3]);
            d.has_seed = has_seed;
            let mut steps = 0;
            while d.is_active() {
                deplete_battery(&mut d, &cfg);
                steps += 1;
            }
            assert_eq!(steps, expected);
        }
    }

    #[test]
    fn battery_reward_matches_rate() {
        let cfg = EnvConfig::default();
        let mut d = drone_at([0.0; 3]);
        assert_eq!(deplete_battery(&mut d, &cfg), -0.001);
        d.has_seed = false;
        assert_eq!(deplete_battery(&mut d, &cfg), -0.0005);
    }

    fn forest_with_tree_at(x: f64, z: f64) -> Forest {
        let mut f = Forest::new(600.0);
        f.insert([x, z]);
        f
    }

    #[test]
    fn drop_reward_examples() {
        let station = [0.0, 0.0, 0.0];
        let far = [600.0, 10.0, 0.0];
        let r =
            |d: f64| drop_seed_reward(far, &forest_with_tree_at(600.0, d), station, 600.0).reward;
        assert_eq!(r(2.5), 30.0);
        assert!((r(10.0) - 26.8965517).abs() < 1e-6);
        assert!((r(10.0) - 26.8).abs() <= 0.15);
        assert_eq!(r(1.0), 0.0);
        assert_eq!(r(80.0), 0.0);
        let mid = drop_seed_reward(
            [300.0, 0.0, 0.0],
            &forest_with_tree_at(300.0, 38.75),
            station,
            600.0,
        );
        assert!((mid.reward - 12.5).abs() < 1e-12);
        assert!((mid.station_bonus - 2.5).abs() < 1e-12);
        let empty = Forest::new(600.0);
        assert_eq!(drop_seed_reward(far, &empty, station, 600.0).reward, 0.0);
    }

    #[test]
    fn return_shaping_telescopes() {
        let station = [0.0, 0.0, 0.0];
        let mut d = drone_at([400.0, 10.0, 0.0]);
        d.has_seed = false;
        d.return_phase = Some(ReturnPhase {
            start_distance: 400.0,
            best_distance: 400.0,
        });
        d.position = [300.0, 10.0, 0.0];
        assert!((return_shaping_reward(&mut d, station) - 5.0).abs() < 1e-12);
        d.position = [350.0, 10.0, 0.0];
        assert_eq!(return_shaping_reward(&mut d, station), 0.0);
        d.position = [320.0, 10.0, 0.0];
        assert_eq!(return_shaping_reward(&mut d, station), 0.0);
        d.position = [5.0, 10.0, 0.0];
        let r = return_shaping_reward(&mut d, station);
        let residual = service_at_station(&mut d).unwrap();
        assert!((5.0 + r + residual - 20.0).abs() < 1e-12);
    }

    #[test]
    fn servicing_reloads_and_is_gated_on_seed() {
        let mut d = drone_at([0.0; 3]);
        d.has_seed = false;
        d.battery_units = 300_000;
        assert_eq!(service_at_station(&mut d), Some(0.0));
        assert_eq!(d.battery(), 1.0);
        assert!(d.has_seed);
        d.battery_units = 10;
        assert_eq!(service_at_station(&mut d), None);
        assert_eq!(d.battery_units, 10);
    }
}
