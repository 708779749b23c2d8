//! Forward-model curiosity. A fixed random projection encodes observations;
//! a small learned model predicts the next encoding from the current one and
//! the action. The squared prediction error is the exploration bonus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::layers::{dense, dense_backward, swish_backward, swish_vec};
use crate::nn::{f32_bits, Adam, AdamConfig};

use super::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CuriosityMode {
    #[default]
    Off,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuriosityModel {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub encoding: usize,
    pub hidden: usize,
    pub strength: f64,
    branches: Vec<usize>,
    #[serde(with = "f32_bits")]
    encoder: Vec<f32>,
    /// `[w1 | b1 | w2 | b2]` of the residual predictor.
    #[serde(with = "f32_bits")]
    pub params: Vec<f32>,
    adam: Adam,
}

impl CuriosityModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        obs_dim: usize,
        continuous_dim: usize,
        branches: &[usize],
        encoding: usize,
        hidden: usize,
        strength: f64,
        adam: AdamConfig,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let action_dim = continuous_dim + branches.iter().sum::<usize>();
        let bound = (3.0 / obs_dim.max(1) as f64).sqrt();
        let encoder = (0..encoding * obs_dim)
            .map(|_| rng.random_range(-bound..=bound) as f32)
            .collect();
        let nin = encoding + action_dim;
        let n = hidden * nin + hidden + encoding * hidden + encoding;
        let mut params = vec![0.0f32; n];
        let b1 = (3.0 / nin as f64).sqrt();
        for v in &mut params[..hidden * nin] {
            *v = rng.random_range(-b1..=b1) as f32;
        }
        let b2 = 0.1 * (3.0 / hidden as f64).sqrt();
        let w2 = hidden * nin + hidden;
        for v in &mut params[w2..w2 + encoding * hidden] {
            *v = rng.random_range(-b2..=b2) as f32;
        }
        Self {
            obs_dim,
            action_dim,
            encoding,
            hidden,
            strength,
            branches: branches.to_vec(),
            encoder,
            adam: Adam::new(n, adam),
            params,
        }
    }

    fn nin(&self) -> usize {
        self.encoding + self.action_dim
    }

    fn split(&self) -> [std::ops::Range<usize>; 4] {
        let (nin, h, e) = (self.nin(), self.hidden, self.encoding);
        let w1 = 0..h * nin;
        let b1 = w1.end..w1.end + h;
        let w2 = b1.end..b1.end + e * h;
        let b2 = w2.end..w2.end + e;
        [w1, b1, w2, b2]
    }

    pub fn encode(&self, obs: &[f32]) -> Vec<f32> {
        let zero = vec![0.0f32; self.encoding];
        dense(obs, &self.encoder, &zero, self.obs_dim, self.encoding)
            .into_iter()
            .map(f32::tanh)
            .collect()
    }

    fn features(&self, phi: &[f32], raw: &[f32], discrete: &[usize]) -> Vec<f32> {
        let mut x = phi.to_vec();
        x.extend(raw.iter().map(|r| r.clamp(-1.0, 1.0)));
        for (&n, &a) in self.branches.iter().zip(discrete) {
            x.extend((0..n).map(|j| if j == a { 1.0 } else { 0.0 }));
        }
        x
    }

    /// Predicted next encoding: `phi + W2 swish(W1 [phi, a] + b1) + b2`.
    fn predict(&self, params: &[f32], x: &[f32]) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let [w1, b1, w2, b2] = self.split();
        let pre = dense(x, &params[w1], &params[b1], self.nin(), self.hidden);
        let act = swish_vec(&pre);
        let delta = dense(&act, &params[w2], &params[b2], self.hidden, self.encoding);
        let pred = x[..self.encoding]
            .iter()
            .zip(&delta)
            .map(|(p, d)| p + d)
            .collect();
        (pred, pre, act)
    }

    /// Mean squared encoding error of one transition, unscaled.
    fn error(&self, obs: &[f32], raw: &[f32], discrete: &[usize], next_obs: &[f32]) -> f64 {
        let x = self.features(&self.encode(obs), raw, discrete);
        let target = self.encode(next_obs);
        let (pred, _, _) = self.predict(&self.params, &x);
        pred.iter()
            .zip(&target)
            .map(|(p, t)| ((p - t) as f64).powi(2))
            .sum::<f64>()
            / self.encoding as f64
    }

    /// `strength * mean squared error`; always non-negative.
    pub fn intrinsic_reward(
        &self,
        obs: &[f32],
        raw: &[f32],
        discrete: &[usize],
        next_obs: &[f32],
    ) -> f64 {
        self.strength * self.error(obs, raw, discrete, next_obs)
    }

    pub fn intrinsic_for(&self, t: &Transition) -> f64 {
        t.next_obs.as_ref().map_or(0.0, |n| {
            self.intrinsic_reward(&t.obs, &t.raw, &t.discrete, n)
        })
    }

    /// One Adam step on the mean forward-model loss over `batch`; returns the loss.
    pub fn train_step<'a>(&mut self, batch: impl Iterator<Item = &'a Transition>, lr: f64) -> f64 {
        let [w1, b1, w2, b2] = self.split();
        let mut grads = vec![0.0f32; self.params.len()];
        let mut loss = 0.0;
        let mut count = 0usize;
        for t in batch {
            let Some(next) = &t.next_obs else { continue };
            let x = self.features(&self.encode(&t.obs), &t.raw, &t.discrete);
            let target = self.encode(next);
            let (pred, pre, act) = self.predict(&self.params, &x);
            let diff: Vec<f32> = pred.iter().zip(&target).map(|(p, q)| p - q).collect();
            loss += diff.iter().map(|d| (*d as f64).powi(2)).sum::<f64>() / self.encoding as f64;
            let scale = 2.0 / self.encoding as f32;
            let d_delta: Vec<f32> = diff.iter().map(|d| d * scale).collect();
            let (g_lo, g_hi) = grads.split_at_mut(w2.start);
            let (gw2, gb2) = g_hi.split_at_mut(w2.len());
            let d_act = dense_backward(
                &act,
                &self.params[w2.clone()],
                &d_delta,
                gw2,
                &mut gb2[..b2.len()],
                self.hidden,
            );
            let d_pre = swish_backward(&pre, &d_act);
            let (gw1, gb1) = g_lo.split_at_mut(w1.end);
            dense_backward(
                &x,
                &self.params[w1.clone()],
                &d_pre,
                gw1,
                &mut gb1[..b1.len()],
                self.nin(),
            );
            count += 1;
        }
        if count == 0 {
            return 0.0;
        }
        let inv = 1.0 / count as f32;
        grads.iter_mut().for_each(|g| *g *= inv);
        if grads.iter().all(|g| g.is_finite()) {
            self.adam.step(&mut self.params, &grads, lr);
        }
        loss / count as f64
    }
}
