use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{entropy, entropy_grad, log_prob, log_prob_grad, Adam, OutputGrad, PolicyNet};

use super::{Batch, CuriosityModel, PpoConfig, PpoError};

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 32;

/// `min(r A, g(eps, A))` with `g = (1 + eps) A` for `A >= 0`, else `(1 - eps) A`.
pub fn clip_objective(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let g = if advantage >= 0.0 {
        (1.0 + epsilon) * advantage
    } else {
        (1.0 - epsilon) * advantage
    };
    (ratio * advantage).min(g)
}

/// Shifts to mean 0 and scales to unit (population) standard deviation.
pub fn normalize_advantages(adv: &[f32]) -> Vec<f64> {
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().map(|&a| a as f64).sum::<f64>() / n;
    let var = adv.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    adv.iter().map(|&a| (a as f64 - mean) / sd).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub update: u64,
    pub transitions: usize,
    pub learning_rate: f64,
    /// Mean probability ratio over the first epoch; 1 when nothing moved yet.
    pub mean_ratio_first_epoch: f64,
    /// Fraction of samples with `|r - 1| > epsilon`, over all epochs.
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub curiosity_loss: f64,
    pub mean_train_reward: f64,
}

#[derive(Default)]
struct ChunkResult {
    grads: Vec<f32>,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    ratio_sum: f64,
    clipped: usize,
}

fn chunk_gradient(
    net: &PolicyNet,
    params: &[f32],
    batch: &Batch,
    idx: &[usize],
    adv: &[f64],
    cfg: &PpoConfig,
    inv_n: f32,
) -> Result<ChunkResult, PpoError> {
    let nc = &net.config;
    let mut r = ChunkResult {
        grads: vec![0.0; net.n_params()],
        ..Default::default()
    };
    for (&i, &a) in idx.iter().zip(adv) {
        let t = &batch.transitions[i];
        let (out, cache) = net.forward_cached(params, &t.obs)?;
        let lp = log_prob(&out, nc.continuous_dist, &nc.branches, &t.raw, &t.discrete);
        let ratio = ((lp - t.log_prob) as f64).exp();
        let surrogate = clip_objective(ratio, a, cfg.epsilon);
        let ent = entropy(&out, &nc.branches) as f64;
        let ret = batch.returns[i] as f64;
        let verr = out.value as f64 - ret;
        r.policy_loss -= surrogate;
        r.value_loss += verr * verr;
        r.entropy += ent;
        r.ratio_sum += ratio;
        if (ratio - 1.0).abs() > cfg.epsilon {
            r.clipped += 1;
        }

        let mut d = OutputGrad::zeros(&out);
        if ratio * a <= clip_objective(ratio, a, cfg.epsilon) {
            log_prob_grad(
                &out,
                &nc.branches,
                &t.raw,
                &t.discrete,
                -(a * ratio) as f32 * inv_n,
                &mut d,
            );
        }
        entropy_grad(&out, &nc.branches, -(cfg.beta as f32) * inv_n, &mut d);
        d.value = (2.0 * cfg.value_coef * verr) as f32 * inv_n;
        net.backward(params, &cache, &d, &mut r.grads);
    }
    Ok(r)
}

/// Runs `num_epochs` passes of shuffled minibatches over `batch`, stepping
/// `params` with Adam at learning rate `lr`.
#[allow(clippy::too_many_arguments)]
pub fn update(
    net: &PolicyNet,
    params: &mut [f32],
    adam: &mut Adam,
    mut curiosity: Option<&mut CuriosityModel>,
    batch: &Batch,
    cfg: &PpoConfig,
    lr: f64,
    shuffle_seed: u64,
    update_index: u64,
) -> Result<TrainStats, PpoError> {
    let n = batch.len();
    let mut stats = TrainStats {
        update: update_index,
        transitions: n,
        learning_rate: lr,
        mean_train_reward: batch.train_rewards.iter().sum::<f64>() / n.max(1) as f64,
        ..Default::default()
    };
    if n == 0 {
        stats.mean_ratio_first_epoch = 1.0;
        return Ok(stats);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut samples, mut clipped, mut n_minibatches) = (0usize, 0usize, 0usize);
    let mut curiosity_loss = 0.0;
    for epoch in 0..cfg.num_epochs {
        order.shuffle(&mut rng);
        let mut ratio_sum = 0.0;
        for mb in order.chunks(cfg.batch_size) {
            let raw_adv: Vec<f32> = mb.iter().map(|&i| batch.advantages[i]).collect();
            let adv = normalize_advantages(&raw_adv);
            let inv_n = 1.0 / mb.len() as f32;
            let current: &[f32] = params;
            let parts: Vec<Result<ChunkResult, PpoError>> = mb
                .par_chunks(GRAD_CHUNK)
                .zip(adv.par_chunks(GRAD_CHUNK))
                .map(|(idx, a)| chunk_gradient(net, current, batch, idx, a, cfg, inv_n))
                .collect();
            let mut grads = vec![0.0f32; net.n_params()];
            let (mut pl, mut vl, mut ent) = (0.0, 0.0, 0.0);
            for part in parts {
                let part = part?;
                grads.iter_mut().zip(&part.grads).for_each(|(g, p)| *g += p);
                pl += part.policy_loss;
                vl += part.value_loss;
                ent += part.entropy;
                ratio_sum += part.ratio_sum;
                clipped += part.clipped;
            }
            let m = mb.len() as f64;
            let loss = pl / m + cfg.value_coef * vl / m - cfg.beta * ent / m;
            if !loss.is_finite() {
                return Err(PpoError::NonFiniteLoss {
                    update: update_index,
                });
            }
            net.check_finite(&grads)?;
            adam.step(params, &grads, lr);
            if let Some(c) = curiosity.as_deref_mut() {
                curiosity_loss += c.train_step(mb.iter().map(|&i| &batch.transitions[i]), lr);
            }
            stats.policy_loss += pl / m;
            stats.value_loss += vl / m;
            stats.entropy += ent / m;
            samples += mb.len();
            n_minibatches += 1;
        }
        if epoch == 0 {
            stats.mean_ratio_first_epoch = ratio_sum / n as f64;
        }
    }
    let k = n_minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.curiosity_loss = curiosity_loss / k;
    stats.clip_fraction = clipped as f64 / samples as f64;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{sample_action, NetConfig};
    use crate::ppo::Transition;
    use proptest::prelude::*;

    #[test]
    fn clip_examples() {
        assert!((clip_objective(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clip_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
        for a in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(clip_objective(1.0, a, 0.2), a);
        }
    }

    proptest! {
        #[test]
        fn clip_bound_and_flatness(r in 0.01f64..3.0, a in -10.0f64..10.0, eps in 0.05f64..0.5) {
            let v = clip_objective(r, a, eps);
            prop_assert!(v.abs() <= (r * a).abs().max((1.0 + eps) * a.abs()) + 1e-12);
            let h = 1e-6;
            let clipped_branch = (r * a) > clip_objective(r, a, eps);
            if clipped_branch && (r - h < 1.0 - eps || r - h > 1.0 + eps) && (r + h < 1.0 - eps || r + h > 1.0 + eps) {
                let slope = (clip_objective(r + h, a, eps) - clip_objective(r - h, a, eps)) / (2.0 * h);
                prop_assert!(slope.abs() < 1e-9);
            }
        }

        #[test]
        fn normalized_minibatch_moments(adv in proptest::collection::vec(-50.0f32..50.0, 2..200)) {
            let spread = adv.iter().cloned().fold(f32::MIN, f32::max) - adv.iter().cloned().fold(f32::MAX, f32::min);
            prop_assume!(spread > 1e-2);
            let z = normalize_advantages(&adv);
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((sd - 1.0).abs() < 1e-4);
        }
    }

    fn setup(n: usize) -> (PolicyNet, Vec<f32>, Batch) {
        let net = PolicyNet::new(NetConfig {
            vector_dim: 4,
            visual_side: 0,
            hidden_units: 8,
            ..NetConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params: Vec<f32> = net.init_params(&mut rng);
        let mut batch = Batch::default();
        for i in 0..n {
            let obs: Vec<f32> = (0..4).map(|k| ((i * 4 + k) as f32 * 0.3).sin()).collect();
            let out = net.forward(&params, &obs).unwrap();
            let s = sample_action(
                &out,
                net.config.continuous_dist,
                &net.config.branches,
                &mut rng,
            );
            let raw: Vec<f32> = s.raw.iter().map(|&v| v as f32).collect();
            let lp = log_prob(
                &out,
                net.config.continuous_dist,
                &net.config.branches,
                &raw,
                &s.discrete,
            );
            batch.transitions.push(Transition {
                obs,
                raw,
                discrete: s.discrete,
                log_prob: lp,
                value: out.value,
                reward: 0.0,
                next_obs: None,
            });
            batch.advantages.push((i as f32 * 0.7).cos());
            batch.returns.push(0.5);
            batch.train_rewards.push(0.0);
        }
        (net, params, batch)
    }

    #[test]
    fn first_epoch_ratio_is_one() {
        let (net, mut params, batch) = setup(1);
        let cfg = PpoConfig {
            batch_size: 1,
            buffer_size: 1,
            ..Default::default()
        };
        let mut adam = Adam::new(net.n_params(), cfg.adam);
        let stats = update(&net, &mut params, &mut adam, None, &batch, &cfg, 3e-4, 0, 0).unwrap();
        assert!((stats.mean_ratio_first_epoch - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (net, mut params, batch) = setup(16);
        let before = params.clone();
        let cfg = PpoConfig {
            batch_size: 8,
            buffer_size: 16,
            ..Default::default()
        };
        let mut adam = Adam::new(net.n_params(), cfg.adam);
        update(
            &net,
            &mut params,
            &mut adam,
            None,
            &batch,
            &cfg,
            cfg.learning_rate_at(cfg.max_steps),
            1,
            0,
        )
        .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn zero_advantages_leave_surrogate_gradient_zero() {
        let (net, params, mut batch) = setup(8);
        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let cfg = PpoConfig {
            beta: 0.0,
            value_coef: 0.0,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..8).collect();
        let adv = normalize_advantages(&batch.advantages);
        let r = chunk_gradient(&net, &params, &batch, &idx, &adv, &cfg, 1.0 / 8.0).unwrap();
        assert!(r.grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn result_does_not_depend_on_thread_count() {
        let (net, params, batch) = setup(100);
        let cfg = PpoConfig {
            batch_size: 50,
            buffer_size: 100,
            ..Default::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut p = params.clone();
                let mut adam = Adam::new(net.n_params(), cfg.adam);
                update(&net, &mut p, &mut adam, None, &batch, &cfg, 3e-4, 9, 0).unwrap();
                p
            })
        };
        assert_eq!(run(1), run(3));
    }
}
