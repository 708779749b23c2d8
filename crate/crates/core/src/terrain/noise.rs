//! Lattice value noise and its fractal (octave) sum.
//!
//! The lattice hash is a fixed 64-bit mix of `(cell_x, cell_z, octave, seed)`
//! built from the splitmix64 finalizer, so the same inputs produce the same
//! bits on every platform. Only `+`, `*` and comparisons are used on the
//! floating point side; no transcendental functions are involved.

use serde::{Deserialize, Serialize};

use super::TerrainError;

/// Octave parameters of the fractal noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub octaves: u32,
    pub persistence: f64,
    pub lacunarity: f64,
    /// Wavelength of the base octave in meters.
    pub scale: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            persistence: 0.5,
            lacunarity: 2.0,
            scale: 300.0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), TerrainError> {
        if self.octaves < 1 {
            return Err(TerrainError::InvalidConfig("octaves must be >= 1".into()));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(TerrainError::InvalidConfig(
                "persistence must lie in (0, 1]".into(),
            ));
        }
        if !(self.lacunarity >= 1.0) {
            return Err(TerrainError::InvalidConfig(
                "lacunarity must be >= 1".into(),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(TerrainError::InvalidConfig(
                "noise scale must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Sum of the octave amplitudes, `sum_{i<octaves} persistence^i`.
    pub fn amplitude_sum(&self) -> f64 {
        let mut amplitude = 1.0;
        let mut total = 0.0;
        for _ in 0..self.octaves {
            total += amplitude;
            amplitude *= self.persistence;
        }
        total
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a lattice cell, an octave index and a seed into 64 well-distributed bits.
#[inline]
pub fn lattice_hash(cell_x: i64, cell_z: i64, octave: u32, seed: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0xD1B5_4A32_D192_ED03);
    h = splitmix64(h ^ cell_x as u64);
    h = splitmix64(h ^ (cell_z as u64).rotate_left(21));
    splitmix64(h ^ u64::from(octave).wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Maps hash bits to a uniform value in `[0, 1)` using the top 53 bits.
#[inline]
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise at lattice coordinates `(u, v)`: corner values from the hash,
/// blended with smoothstep-weighted bilinear interpolation. Output in `[0, 1)`.
pub fn lattice_noise(u: f64, v: f64, octave: u32, seed: u64) -> f64 {
    let u0 = u.floor();
    let v0 = v.floor();
    let (ix, iz) = (u0 as i64, v0 as i64);
    let tx = smoothstep(u - u0);
    let tz = smoothstep(v - v0);

    let c00 = unit_from_bits(lattice_hash(ix, iz, octave, seed));
    let c10 = unit_from_bits(lattice_hash(ix + 1, iz, octave, seed));
    let c01 = unit_from_bits(lattice_hash(ix, iz + 1, octave, seed));
    let c11 = unit_from_bits(lattice_hash(ix + 1, iz + 1, octave, seed));

    let top = c00 + (c10 - c00) * tx;
    let bottom = c01 + (c11 - c01) * tx;
    top + (bottom - top) * tz
}

/// Fractal sum of `noise.octaves` lattice-noise layers. Octave `i` has
/// amplitude `persistence^i` and frequency `lacunarity^i / scale`; the sum is
/// divided by the amplitude total so the result stays in `[0, 1]`.
pub fn fractal_noise(x: f64, z: f64, seed: u64, noise: &NoiseParams) -> f64 {
    let mut amplitude = 1.0;
    let mut frequency = 1.0;
    let mut total = 0.0;
    let mut norm = 0.0;
    for octave in 0..noise.octaves {
        let u = x * frequency / noise.scale;
        let v = z * frequency / noise.scale;
        total += amplitude * lattice_noise(u, v, octave, seed);
        norm += amplitude;
        amplitude *= noise.persistence;
        frequency *= noise.lacunarity;
    }
    (total / norm).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitude_sum_is_geometric_series() {
        let p = NoiseParams {
            octaves: 4,
            persistence: 0.5,
            ..NoiseParams::default()
        };
        assert_eq!(p.amplitude_sum(), 1.875);
    }

    #[test]
    fn single_octave_is_base_lattice_value() {
        let p = NoiseParams {
            octaves: 1,
            ..NoiseParams::default()
        };
        for &(x, z) in &[(0.0, 0.0), (123.4, -55.5), (-599.0, 600.0), (17.25, 3.5)] {
            let expected = lattice_noise(x / p.scale, z / p.scale, 0, 9);
            assert_eq!(fractal_noise(x, z, 9, &p), expected);
        }
    }

    #[test]
    fn noise_is_bit_deterministic_and_bounded() {
        let p = NoiseParams::default();
        for i in 0..500 {
            let x = -600.0 + i as f64 * 2.4;
            let z = 600.0 - i as f64 * 1.7;
            let a = fractal_noise(x, z, 42, &p);
            let b = fractal_noise(x, z, 42, &p);
            assert_eq!(a.to_bits(), b.to_bits());
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn lattice_points_take_hashed_corner_values() {
        let v = lattice_noise(3.0, -2.0, 1, 5);
        assert_eq!(v, unit_from_bits(lattice_hash(3, -2, 1, 5)));
    }

    #[test]
    fn seeds_decorrelate() {
        let p = NoiseParams::default();
        let differing = (0..100)
            .filter(|&i| {
                let x = i as f64 * 11.0;
                fractal_noise(x, 7.0, 1, &p) != fractal_noise(x, 7.0, 2, &p)
            })
            .count();
        assert!(differing > 95);
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = NoiseParams {
            persistence: 1.5,
            ..NoiseParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseParams {
            lacunarity: 0.5,
            ..NoiseParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseParams {
            octaves: 0,
            ..NoiseParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
