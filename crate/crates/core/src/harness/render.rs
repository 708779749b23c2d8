//! Scenario rasters, the difficulty-by-seed mosaic and flight path overlays.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::env::TRAJECTORY_HEADER;
use crate::terrain::{
    generate_scenario, height_map_pgm, reforestation_map_pgm, trees_csv, GrayImage, Scenario,
    ScenarioConfig,
};

use super::HarnessError;

/// Brightest height value in overlays; path pixels use 255.
const OVERLAY_TERRAIN_MAX: f64 = 191.0;
const PATH_VALUE: u8 = 255;

pub struct RenderSet {
    pub height_pgm: Vec<u8>,
    pub reforestation_pgm: Vec<u8>,
    pub trees_csv: String,
}

pub fn render_scenario(config: &ScenarioConfig) -> Result<RenderSet, HarnessError> {
    let s = generate_scenario(config)?;
    Ok(RenderSet {
        height_pgm: height_map_pgm(&s).to_pgm(),
        reforestation_pgm: reforestation_map_pgm(&s).to_pgm(),
        trees_csv: trees_csv(&s),
    })
}

/// Writes `height_s{seed}_d{difficulty}.pgm`, `reforestation_…pgm` and
/// `trees_…csv` into `dir`.
pub fn write_render(dir: &Path, config: &ScenarioConfig) -> Result<Vec<PathBuf>, HarnessError> {
    let set = render_scenario(config)?;
    std::fs::create_dir_all(dir)?;
    let tag = format!("s{}_d{}", config.seed, config.difficulty);
    let files = [
        (format!("height_{tag}.pgm"), set.height_pgm),
        (format!("reforestation_{tag}.pgm"), set.reforestation_pgm),
        (format!("trees_{tag}.csv"), set.trees_csv.into_bytes()),
    ];
    let mut out = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        out.push(p);
    }
    Ok(out)
}

/// Mosaic of height maps: one row per difficulty, one column per seed, each
/// tile `tile` pixels wide with a white `gap` between tiles.
pub fn difficulty_seed_matrix(
    base: &ScenarioConfig,
    difficulties: &[u32],
    seeds: &[u64],
    tile: usize,
    gap: usize,
) -> Result<GrayImage, HarnessError> {
    let w = seeds.len() * tile + (seeds.len() + 1) * gap;
    let h = difficulties.len() * tile + (difficulties.len() + 1) * gap;
    let mut img = GrayImage::new(w, h);
    img.pixels.iter_mut().for_each(|p| *p = 255);
    for (r, &d) in difficulties.iter().enumerate() {
        for (c, &seed) in seeds.iter().enumerate() {
            let s = generate_scenario(&ScenarioConfig {
                seed,
                difficulty: d,
                ..base.clone()
            })?;
            let full = height_map_pgm(&s);
            let mut t = GrayImage::new(tile, tile);
            for ty in 0..tile {
                for tx in 0..tile {
                    let sx = tx * full.width / tile;
                    let sy = ty * full.height / tile;
                    t.set(tx, ty, full.get(sx, sy));
                }
            }
            img.blit(&t, gap + c * (tile + gap), gap + r * (tile + gap));
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub agent: usize,
    pub position: [f64; 3],
}

/// Reads the recorder's CSV, keeping step, agent and position. Rows are
/// numbered as lines in the file (header is line 1).
pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPoint>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| HarnessError::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected: Vec<&str> = TRAJECTORY_HEADER.split(',').collect();
    if header.iter().take(5).ne(expected.iter().take(5).copied()) {
        return Err(HarnessError::Csv {
            row: 1,
            message: format!("header must start with {}", expected[..5].join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| HarnessError::Csv {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<&str, HarnessError> {
            rec.get(k).ok_or_else(|| HarnessError::Csv {
                row,
                message: format!("missing column {}", expected[k]),
            })
        };
        let num = |k: usize| -> Result<f64, HarnessError> {
            let s = field(k)?;
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| HarnessError::Csv {
                    row,
                    message: format!("column {} is not a finite number: {s:?}", expected[k]),
                })
        };
        let int = |k: usize| -> Result<u64, HarnessError> {
            let s = field(k)?;
            s.trim().parse::<u64>().map_err(|_| HarnessError::Csv {
                row,
                message: format!("column {} is not an integer: {s:?}", expected[k]),
            })
        };
        out.push(TrajectoryPoint {
            step: int(0)?,
            agent: int(1)? as usize,
            position: [num(2)?, num(3)?, num(4)?],
        });
    }
    Ok(out)
}

fn world_to_pixel(s: &Scenario, x: f64, z: f64) -> (i64, i64) {
    let res = s.heights.resolution as i64;
    let spacing = s.heights.spacing();
    let half = s.half_extent();
    let ix = (((x + half) / spacing).round() as i64).clamp(0, res - 1);
    let iz = (((z + half) / spacing).round() as i64).clamp(0, res - 1);
    (ix, res - 1 - iz)
}

fn line(img: &mut GrayImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        img.set(x0 as usize, y0 as usize, PATH_VALUE);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Height map dimmed to leave headroom, with every agent's path drawn at 255.
pub fn flight_overlay(s: &Scenario, points: &[TrajectoryPoint]) -> GrayImage {
    let mut img = height_map_pgm(s);
    img.pixels
        .iter_mut()
        .for_each(|p| *p = (f64::from(*p) * OVERLAY_TERRAIN_MAX / 255.0).round() as u8);
    let mut last: std::collections::BTreeMap<usize, (i64, i64)> = Default::default();
    for p in points {
        let px = world_to_pixel(s, p.position[0], p.position[2]);
        let from = last.insert(p.agent, px).unwrap_or(px);
        line(&mut img, from, px);
    }
    img
}

/// `step,agent,altitude,ground,clearance` per trajectory row.
pub fn altitude_profile_csv(s: &Scenario, points: &[TrajectoryPoint]) -> String {
    let mut out = String::from("step,agent,altitude,ground,clearance\n");
    for p in points {
        let g = s.ground_height(p.position[0], p.position[2]);
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4}",
            p.step,
            p.agent,
            p.position[1],
            g,
            p.position[1] - g
        );
    }
    out
}
