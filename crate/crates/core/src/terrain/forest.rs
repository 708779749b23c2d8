//! Tree positions with a uniform-grid spatial hash for exact nearest queries.

use serde::{Deserialize, Serialize};

/// Edge length of a hash cell in meters.
pub const DEFAULT_CELL_SIZE: f64 = 25.0;

/// A set of 2-D tree positions `(x, z)` in meters, indexed by a dense grid of
/// buckets that covers the square world `[-half_extent, half_extent]^2`.
///
/// Points outside the square are still accepted; they are bucketed into the
/// nearest border cell so queries stay exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ForestRepr", into = "ForestRepr")]
pub struct Forest {
    half_extent: f64,
    cell_size: f64,
    cells_per_side: usize,
    points: Vec<[f64; 2]>,
    buckets: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct ForestRepr {
    half_extent: f64,
    cell_size: f64,
    points: Vec<[f64; 2]>,
}

impl From<ForestRepr> for Forest {
    fn from(r: ForestRepr) -> Self {
        let mut f = Forest::with_cell_size(r.half_extent, r.cell_size);
        for p in r.points {
            f.insert(p);
        }
        f
    }
}

impl From<Forest> for ForestRepr {
    fn from(f: Forest) -> Self {
        ForestRepr {
            half_extent: f.half_extent,
            cell_size: f.cell_size,
            points: f.points,
        }
    }
}

impl Forest {
    pub fn new(half_extent: f64) -> Self {
        Self::with_cell_size(half_extent, DEFAULT_CELL_SIZE)
    }

    pub fn with_cell_size(half_extent: f64, cell_size: f64) -> Self {
        assert!(half_extent > 0.0 && cell_size > 0.0);
        let cells_per_side = ((2.0 * half_extent) / cell_size).ceil().max(1.0) as usize;
        Self {
            half_extent,
            cell_size,
            cells_per_side,
            points: Vec::new(),
            buckets: vec![Vec::new(); cells_per_side * cells_per_side],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn cell_coord(&self, v: f64) -> i64 {
        ((v + self.half_extent) / self.cell_size).floor() as i64
    }

    fn clamp_cell(&self, c: i64) -> usize {
        c.clamp(0, self.cells_per_side as i64 - 1) as usize
    }

    pub fn insert(&mut self, p: [f64; 2]) {
        let cx = self.clamp_cell(self.cell_coord(p[0]));
        let cz = self.clamp_cell(self.cell_coord(p[1]));
        let idx = self.points.len() as u32;
        self.points.push(p);
        self.buckets[cz * self.cells_per_side + cx].push(idx);
    }

    /// Exact horizontal distance to the closest tree, or `None` if there are no trees.
    pub fn nearest_distance(&self, x: f64, z: f64) -> Option<f64> {
        self.nearest(x, z).map(|(_, d)| d)
    }

    /// Index and distance of the closest tree. Ties resolve to the lowest index.
    pub fn nearest(&self, x: f64, z: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        // Query cell clamped onto the grid. The ring bound below still holds:
        // along any axis where the query lies outside, it is further from
        // inward cells than the border cell is.
        let qx = self.clamp_cell(self.cell_coord(x)) as i64;
        let qz = self.clamp_cell(self.cell_coord(z)) as i64;
        let n = self.cells_per_side as i64;
        let mut best: Option<(usize, f64)> = None;
        let max_ring = n;
        for ring in 0..=max_ring {
            let lo_x = qx - ring;
            let hi_x = qx + ring;
            let lo_z = qz - ring;
            let hi_z = qz + ring;
            for cz in lo_z..=hi_z {
                if cz < 0 || cz >= n {
                    continue;
                }
                let on_edge_z = cz == lo_z || cz == hi_z;
                let mut cx = lo_x;
                while cx <= hi_x {
                    if cx >= 0 && cx < n {
                        for &i in &self.buckets[cz as usize * self.cells_per_side + cx as usize] {
                            let p = self.points[i as usize];
                            let d = ((p[0] - x).powi(2) + (p[1] - z).powi(2)).sqrt();
                            let better = match best {
                                None => true,
                                Some((bi, bd)) => d < bd || (d == bd && (i as usize) < bi),
                            };
                            if better {
                                best = Some((i as usize, d));
                            }
                        }
                    }
                    // Interior rows only need the two ring columns.
                    if on_edge_z || cx == hi_x {
                        cx += 1;
                    } else {
                        cx = hi_x;
                    }
                }
            }
            if let Some((_, bd)) = best {
                // Every point in ring >= ring+1 is at least ring * cell_size away.
                if bd <= ring as f64 * self.cell_size {
                    break;
                }
            }
        }
        best
    }

    /// Exhaustive O(n) nearest scan; used as an oracle and for tiny sets.
    pub fn nearest_distance_brute(&self, x: f64, z: f64) -> Option<f64> {
        self.points
            .iter()
            .map(|p| ((p[0] - x).powi(2) + (p[1] - z).powi(2)).sqrt())
            .min_by(|a, b| a.total_cmp(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_forest_has_no_nearest() {
        let f = Forest::new(600.0);
        assert_eq!(f.nearest_distance(0.0, 0.0), None);
    }

    #[test]
    fn query_on_a_tree_is_zero() {
        let mut f = Forest::new(600.0);
        f.insert([12.5, -40.0]);
        f.insert([300.0, 300.0]);
        assert_eq!(f.nearest_distance(12.5, -40.0), Some(0.0));
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1usize, 2, 7, 60, 400] {
            let mut f = Forest::new(600.0);
            for _ in 0..n {
                f.insert([
                    rng.random_range(-600.0..600.0),
                    rng.random_range(-600.0..600.0),
                ]);
            }
            for _ in 0..500 {
                let (x, z) = (
                    rng.random_range(-650.0..650.0),
                    rng.random_range(-650.0..650.0),
                );
                let a = f.nearest_distance(x, z).unwrap();
                let b = f.nearest_distance_brute(x, z).unwrap();
                assert!((a - b).abs() < 1e-9, "n={n} ({x},{z}) {a} vs {b}");
            }
        }
    }

    #[test]
    fn serde_rebuilds_the_index() {
        let mut f = Forest::new(150.0);
        f.insert([1.0, 2.0]);
        f.insert([-100.0, 90.0]);
        let json = serde_json::to_string(&f).unwrap();
        let g: Forest = serde_json::from_str(&json).unwrap();
        assert_eq!(g.points(), f.points());
        assert_eq!(g.nearest_distance(-99.0, 90.0), Some(1.0));
    }
}
