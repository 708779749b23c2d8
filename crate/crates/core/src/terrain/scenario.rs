use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::forest::Forest;
use super::noise::{fractal_noise, lattice_hash, unit_from_bits, NoiseParams};
use super::TerrainError;

/// Nearest-tree distance at which the proximity factor reaches 1.
pub const PROXIMITY_NEAR: f64 = 2.5;
/// Nearest-tree distance beyond which the proximity factor is 0.
pub const PROXIMITY_FAR: f64 = 75.0;

const FOREST_CHANNEL_SALT: u64 = 0x5EED_F0E5_7000_0001;
const JITTER_SALT: u64 = 0x7177_E500_0000_0003;

/// Placement of the forest on the generated terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    /// Fertile range of height, normalized to the scenario's own min..max.
    pub fertile_band: [f64; 2],
    /// Cells steeper than this are never fertile.
    pub slope_threshold_deg: f64,
    pub forest_noise_threshold: f64,
    pub tree_spacing: f64,
    /// Maximum deterministic offset of a tree from its lattice point, per axis.
    pub tree_jitter: f64,
    /// Base wavelength of the forest noise channel.
    pub noise_scale: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            fertile_band: [0.20, 0.60],
            slope_threshold_deg: 30.0,
            forest_noise_threshold: 0.55,
            tree_spacing: 10.0,
            tree_jitter: 3.0,
            noise_scale: 150.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub difficulty: u32,
    pub world_extent: f64,
    pub max_altitude: f64,
    pub grid_resolution: usize,
    pub noise: NoiseParams,
    pub forest: ForestParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            difficulty: 5,
            world_extent: 1200.0,
            max_altitude: 100.0,
            grid_resolution: 241,
            noise: NoiseParams::default(),
            forest: ForestParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn new(seed: u64, difficulty: u32) -> Self {
        Self {
            seed,
            difficulty,
            ..Self::default()
        }
    }

    pub fn half_extent(&self) -> f64 {
        self.world_extent / 2.0
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let bad = |m: &str| Err(TerrainError::InvalidConfig(m.to_string()));
        if !(self.world_extent > 0.0 && self.world_extent.is_finite()) {
            return bad("world_extent must be > 0");
        }
        if !(self.max_altitude > 0.0 && self.max_altitude.is_finite()) {
            return bad("max_altitude must be > 0");
        }
        if self.grid_resolution < 2 {
            return bad("grid_resolution must be >= 2");
        }
        if !(1..=10).contains(&self.difficulty) {
            return bad("difficulty must lie in 1..=10");
        }
        let f = &self.forest;
        if !(0.0 <= f.fertile_band[0]
            && f.fertile_band[0] < f.fertile_band[1]
            && f.fertile_band[1] <= 1.0)
        {
            return bad("fertile_band must satisfy 0 <= low < high <= 1");
        }
        if !(f.tree_spacing > 0.0) || !(f.tree_jitter >= 0.0) || !(f.noise_scale > 0.0) {
            return bad("tree_spacing and noise_scale must be > 0, tree_jitter >= 0");
        }
        if !(f.slope_threshold_deg > 0.0 && f.slope_threshold_deg < 90.0) {
            return bad("slope_threshold_deg must lie in (0, 90)");
        }
        self.noise.validate()
    }
}

/// Terrain amplitude for a difficulty level: `max_altitude * difficulty / 10`.
pub fn amplitude(max_altitude: f64, difficulty: u32) -> f64 {
    max_altitude * f64::from(difficulty) / 10.0
}

/// Height added at the world corners by the bowl filter: `10 * difficulty` meters.
pub fn bowl_gain(difficulty: u32) -> f64 {
    10.0 * f64::from(difficulty)
}

/// Raises terrain quadratically with distance from the world center so higher
/// difficulties form a valley. `r_max` is the half-diagonal of the world.
pub fn apply_bowl_filter(
    h: f64,
    x: f64,
    z: f64,
    difficulty: u32,
    half_extent: f64,
    max_altitude: f64,
) -> f64 {
    let r2 = x * x + z * z;
    let r_max2 = 2.0 * half_extent * half_extent;
    (h + bowl_gain(difficulty) * (r2 / r_max2)).min(max_altitude)
}

/// Linear ramp from 1 at 2.5 m to 0 at 75 m of nearest-tree distance; 0 outside.
pub fn proximity_factor(distance: f64) -> f64 {
    if !(PROXIMITY_NEAR..=PROXIMITY_FAR).contains(&distance) {
        return 0.0;
    }
    ((PROXIMITY_FAR - distance) / (PROXIMITY_FAR - PROXIMITY_NEAR)).clamp(0.0, 1.0)
}

/// Square vertex grid over `[-half_extent, half_extent]^2`, row-major in z.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub resolution: usize,
    pub half_extent: f64,
    pub cells: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.resolution - 1) as f64
    }

    pub fn vertex_position(&self, ix: usize, iz: usize) -> (f64, f64) {
        let s = self.spacing();
        (
            -self.half_extent + ix as f64 * s,
            -self.half_extent + iz as f64 * s,
        )
    }

    pub fn get(&self, ix: usize, iz: usize) -> T {
        self.cells[iz * self.resolution + ix]
    }

    /// Grid vertex nearest to a world position, clamped onto the grid.
    pub fn nearest_vertex(&self, x: f64, z: f64) -> (usize, usize) {
        let s = self.spacing();
        let max = (self.resolution - 1) as f64;
        let ix = ((x + self.half_extent) / s).round().clamp(0.0, max) as usize;
        let iz = ((z + self.half_extent) / s).round().clamp(0.0, max) as usize;
        (ix, iz)
    }
}

/// An immutable generated world.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub heights: Grid<f32>,
    pub fertile: Grid<bool>,
    pub trees: Forest,
    /// Station position `(x, y, z)`; `y` is the ground height there.
    pub station: [f64; 3],
    pub digest: String,
}

impl Scenario {
    pub fn half_extent(&self) -> f64 {
        self.config.half_extent()
    }

    pub fn in_bounds(&self, x: f64, z: f64) -> bool {
        let h = self.half_extent();
        (-h..=h).contains(&x) && (-h..=h).contains(&z)
    }

    /// Bilinearly interpolated ground height; positions are clamped onto the world.
    pub fn ground_height(&self, x: f64, z: f64) -> f64 {
        let g = &self.heights;
        let s = g.spacing();
        let max = (g.resolution - 1) as f64;
        let u = ((x + g.half_extent) / s).clamp(0.0, max);
        let v = ((z + g.half_extent) / s).clamp(0.0, max);
        let ix = (u.floor() as usize).min(g.resolution - 2);
        let iz = (v.floor() as usize).min(g.resolution - 2);
        let tx = u - ix as f64;
        let tz = v - iz as f64;
        let h00 = f64::from(g.get(ix, iz));
        let h10 = f64::from(g.get(ix + 1, iz));
        let h01 = f64::from(g.get(ix, iz + 1));
        let h11 = f64::from(g.get(ix + 1, iz + 1));
        let a = h00 + (h10 - h00) * tx;
        let b = h01 + (h11 - h01) * tx;
        a + (b - a) * tz
    }

    pub fn is_fertile_at(&self, x: f64, z: f64) -> bool {
        let (ix, iz) = self.fertile.nearest_vertex(x, z);
        self.fertile.get(ix, iz)
    }

    /// Horizontal distance from a point to the closest generated tree.
    pub fn nearest_tree_distance(&self, p: [f64; 3]) -> Option<f64> {
        self.trees.nearest_distance(p[0], p[2])
    }

    /// Proximity factor of the nearest-tree distance at a 2-D point `(x, z)`.
    pub fn reforestation_value(&self, x: f64, z: f64) -> f64 {
        self.trees
            .nearest_distance(x, z)
            .map_or(0.0, proximity_factor)
    }
}

fn quantize_mm(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

fn compute_digest(heights: &Grid<f32>, trees: &Forest, station: [f64; 3]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((heights.resolution as u64).to_le_bytes());
    for &h in &heights.cells {
        hasher.update(quantize_mm(f64::from(h)).to_le_bytes());
    }
    hasher.update((trees.len() as u64).to_le_bytes());
    for p in trees.points() {
        hasher.update(quantize_mm(p[0]).to_le_bytes());
        hasher.update(quantize_mm(p[1]).to_le_bytes());
    }
    for v in station {
        hasher.update(quantize_mm(v).to_le_bytes());
    }
    hasher.finalize()[..16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Generates the world for `config`. Fails with `DegenerateScenario` when no
/// vertex is fertile.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, TerrainError> {
    config.validate()?;
    let res = config.grid_resolution;
    let half = config.half_extent();
    let amp = amplitude(config.max_altitude, config.difficulty);

    let mut heights = Grid {
        resolution: res,
        half_extent: half,
        cells: vec![0f32; res * res],
    };
    for iz in 0..res {
        for ix in 0..res {
            let (x, z) = heights.vertex_position(ix, iz);
            let n = fractal_noise(x, z, config.seed, &config.noise);
            let h = apply_bowl_filter(amp * n, x, z, config.difficulty, half, config.max_altitude);
            heights.cells[iz * res + ix] = h.clamp(0.0, config.max_altitude) as f32;
        }
    }

    let fertile = fertility_mask(&heights, &config.forest);
    if !fertile.cells.iter().any(|&f| f) {
        return Err(TerrainError::DegenerateScenario {
            seed: config.seed,
            difficulty: config.difficulty,
        });
    }

    let trees = place_trees(config, &fertile);
    let station = place_station(&heights, &fertile);
    let digest = compute_digest(&heights, &trees, station);
    Ok(Scenario {
        config: config.clone(),
        heights,
        fertile,
        trees,
        station,
        digest,
    })
}

fn fertility_mask(heights: &Grid<f32>, forest: &ForestParams) -> Grid<bool> {
    let res = heights.resolution;
    let (lo, hi) = heights
        .cells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| {
            (lo.min(f64::from(h)), hi.max(f64::from(h)))
        });
    let range = hi - lo;
    let spacing = heights.spacing();
    let max_gradient = forest.slope_threshold_deg.to_radians().tan();

    let mut cells = vec![false; res * res];
    for iz in 0..res {
        for ix in 0..res {
            let h = f64::from(heights.get(ix, iz));
            let normalized = if range > 0.0 { (h - lo) / range } else { 0.0 };
            if normalized < forest.fertile_band[0] || normalized > forest.fertile_band[1] {
                continue;
            }
            // Central differences, one-sided on the border.
            let (x0, x1) = (ix.saturating_sub(1), (ix + 1).min(res - 1));
            let (z0, z1) = (iz.saturating_sub(1), (iz + 1).min(res - 1));
            let dhdx = (f64::from(heights.get(x1, iz)) - f64::from(heights.get(x0, iz)))
                / ((x1 - x0) as f64 * spacing);
            let dhdz = (f64::from(heights.get(ix, z1)) - f64::from(heights.get(ix, z0)))
                / ((z1 - z0) as f64 * spacing);
            if (dhdx * dhdx + dhdz * dhdz).sqrt() < max_gradient {
                cells[iz * res + ix] = true;
            }
        }
    }
    Grid {
        resolution: res,
        half_extent: heights.half_extent,
        cells,
    }
}

fn place_trees(config: &ScenarioConfig, fertile: &Grid<bool>) -> Forest {
    let half = config.half_extent();
    let params = &config.forest;
    let forest_noise = NoiseParams {
        scale: params.noise_scale,
        ..config.noise
    };
    let forest_seed = config.seed ^ FOREST_CHANNEL_SALT;
    let per_side = (config.world_extent / params.tree_spacing).floor() as i64;

    let mut trees = Forest::new(half);
    for j in 0..per_side {
        for i in 0..per_side {
            let base_x = -half + (i as f64 + 0.5) * params.tree_spacing;
            let base_z = -half + (j as f64 + 0.5) * params.tree_spacing;
            let jx = unit_from_bits(lattice_hash(i, j, 0, config.seed ^ JITTER_SALT)) * 2.0 - 1.0;
            let jz = unit_from_bits(lattice_hash(i, j, 1, config.seed ^ JITTER_SALT)) * 2.0 - 1.0;
            let x = (base_x + jx * params.tree_jitter).clamp(-half, half);
            let z = (base_z + jz * params.tree_jitter).clamp(-half, half);
            if fractal_noise(x, z, forest_seed, &forest_noise) <= params.forest_noise_threshold {
                continue;
            }
            let (ix, iz) = fertile.nearest_vertex(x, z);
            if fertile.get(ix, iz) {
                trees.insert([x, z]);
            }
        }
    }
    trees
}

/// Fertile vertex closest to the world center; equal distances prefer the lower one.
fn place_station(heights: &Grid<f32>, fertile: &Grid<bool>) -> [f64; 3] {
    let res = heights.resolution;
    let mut best: Option<(f64, f32, usize, usize)> = None;
    for iz in 0..res {
        for ix in 0..res {
            if !fertile.get(ix, iz) {
                continue;
            }
            let (x, z) = heights.vertex_position(ix, iz);
            let d2 = x * x + z * z;
            let h = heights.get(ix, iz);
            let better = match best {
                None => true,
                Some((bd, bh, _, _)) => d2 < bd || (d2 == bd && h < bh),
            };
            if better {
                best = Some((d2, h, ix, iz));
            }
        }
    }
    let (_, h, ix, iz) = best.expect("caller checked for fertile vertices");
    let (x, z) = heights.vertex_position(ix, iz);
    [x, f64::from(h), z]
}
