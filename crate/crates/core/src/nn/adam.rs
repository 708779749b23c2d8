use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are stored as raw `f32` bits when
/// serialized so a restored optimizer continues bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    #[serde(with = "f32_bits")]
    m: Vec<f32>,
    #[serde(with = "f32_bits")]
    v: Vec<f32>,
}

impl Adam {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One descent step on `params` (minimizing). A zero learning rate still
    /// advances the moments but leaves `params` untouched.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let (b1, b2) = (beta1 as f32, beta2 as f32);
        let step = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = epsilon as f32;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            if lr != 0.0 {
                *p -= step * *m / (v.sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

pub(crate) mod f32_bits {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f32], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.to_bits())
            .collect::<Vec<u32>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f32>, D::Error> {
        Ok(Vec::<u32>::deserialize(d)?
            .into_iter()
            .map(f32::from_bits)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut a = Adam::new(2, AdamConfig::default());
        let mut p = [1.0f32, -1.0];
        a.step(&mut p, &[0.5, -3.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_leaves_params() {
        let mut a = Adam::new(1, AdamConfig::default());
        let mut p = [0.25f32];
        a.step(&mut p, &[1.0], 0.0);
        assert_eq!(p, [0.25]);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut a = Adam::new(1, AdamConfig::default());
        let mut p = [5.0f32];
        for _ in 0..2000 {
            let g = [2.0 * p[0]];
            a.step(&mut p, &g, 0.05);
        }
        assert!(p[0].abs() < 1e-2);
    }

    #[test]
    fn serde_roundtrip_is_exact() {
        let mut a = Adam::new(3, AdamConfig::default());
        let mut p = [0.1f32, 0.2, 0.3];
        a.step(&mut p, &[1e-7, 0.333, -2.5], 1e-3);
        let back: Adam = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, back);
    }
}
