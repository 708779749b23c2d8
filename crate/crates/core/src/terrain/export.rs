//! Binary PGM (P5, 8-bit) images and the tree list CSV.
//!
//! Image row 0 is the `+z` (north) edge of the world and column 0 the `-x`
//! edge, one pixel per grid vertex.

use std::fmt::Write as _;

use super::Scenario;

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: u8) {
        self.pixels[row * self.width + col] = v;
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, &self.pixels)
    }

    /// Copies `src` into `self` with its top-left corner at `(col, row)`.
    pub fn blit(&mut self, src: &GrayImage, col: usize, row: usize) {
        for r in 0..src.height {
            for c in 0..src.width {
                if col + c < self.width && row + r < self.height {
                    self.set(col + c, row + r, src.get(c, r));
                }
            }
        }
    }
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

fn to_byte(unit: f64) -> u8 {
    (unit.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn raster(s: &Scenario, f: impl Fn(usize, usize) -> f64) -> GrayImage {
    let res = s.heights.resolution;
    let mut img = GrayImage::new(res, res);
    for row in 0..res {
        let iz = res - 1 - row;
        for ix in 0..res {
            img.set(ix, row, to_byte(f(ix, iz)));
        }
    }
    img
}

/// Heights scaled so that `max_altitude` maps to 255.
pub fn height_map_pgm(s: &Scenario) -> GrayImage {
    let max = s.config.max_altitude;
    raster(s, |ix, iz| f64::from(s.heights.get(ix, iz)) / max)
}

/// Reforestation value (nearest-tree proximity factor) at every vertex.
pub fn reforestation_map_pgm(s: &Scenario) -> GrayImage {
    raster(s, |ix, iz| {
        let (x, z) = s.heights.vertex_position(ix, iz);
        s.reforestation_value(x, z)
    })
}

/// `x,z` per tree in meters with three decimals, preceded by a header row.
pub fn trees_csv(s: &Scenario) -> String {
    let mut out = String::from("x,z\n");
    for p in s.trees.points() {
        let _ = writeln!(out, "{:.3},{:.3}", p[0], p[1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_scenario, ScenarioConfig};

    #[test]
    fn pgm_header_and_size() {
        let bytes = encode_pgm(3, 2, &[0, 1, 2, 3, 4, 5]);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(bytes.len(), b"P5\n3 2\n255\n".len() + 6);
    }

    #[test]
    fn reforestation_map_is_zero_far_from_trees() {
        let s = generate_scenario(&ScenarioConfig::new(0, 5)).unwrap();
        let img = reforestation_map_pgm(&s);
        let res = s.heights.resolution;
        for row in (0..res).step_by(7) {
            for ix in (0..res).step_by(7) {
                let iz = res - 1 - row;
                let (x, z) = s.heights.vertex_position(ix, iz);
                let d = s.trees.nearest_distance_brute(x, z).unwrap();
                if d > 75.0 {
                    assert_eq!(img.get(ix, row), 0);
                }
            }
        }
    }

    #[test]
    fn trees_csv_has_one_row_per_tree() {
        let s = generate_scenario(&ScenarioConfig::new(0, 5)).unwrap();
        let csv = trees_csv(&s);
        assert_eq!(csv.lines().count(), s.trees.len() + 1);
        let first = csv.lines().nth(1).unwrap();
        assert_eq!(first.split(',').count(), 2);
        assert!(first
            .split(',')
            .all(|v| v.split('.').nth(1).map(str::len) == Some(3)));
    }
}
