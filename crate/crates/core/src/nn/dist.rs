//! Action distribution over the mixed head: a diagonal Gaussian for the
//! continuous part and one categorical per discrete branch.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{OutputGrad, PolicyOutput, Real};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const TANH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousDist {
    /// Gaussian sample clamped to [-1, 1]; density evaluated before the clamp.
    #[default]
    ClippedGaussian,
    /// Gaussian sample passed through tanh, with the change-of-variables term.
    TanhSquashed,
}

impl ContinuousDist {
    pub fn squash(self, raw: f64) -> f64 {
        match self {
            Self::ClippedGaussian => raw.clamp(-1.0, 1.0),
            Self::TanhSquashed => raw.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    /// Pre-squash Gaussian draw; this is what `log_prob` is evaluated at.
    pub raw: Vec<f64>,
    /// Action sent to the environment, each in [-1, 1].
    pub continuous: Vec<f64>,
    pub discrete: Vec<usize>,
    pub log_prob: f64,
    pub entropy: f64,
}

fn branch_slices<'a, T>(
    logits: &'a [T],
    branches: &'a [usize],
) -> impl Iterator<Item = (usize, &'a [T])> + 'a {
    branches.iter().scan(0usize, move |off, &n| {
        let start = *off;
        *off += n;
        Some((start, &logits[start..start + n]))
    })
}

/// Numerically stable `log softmax(z)`.
fn log_softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    z.iter().map(|&v| v - lse).collect()
}

fn continuous_log_prob<T: Real>(out: &PolicyOutput<T>, dist: ContinuousDist, raw: &[T]) -> T {
    let half_ln_2pi = T::from_f64_lossy(HALF_LN_2PI);
    let mut lp = T::zero();
    for ((&mu, &ls), &x) in out.means.iter().zip(&out.log_stds).zip(raw) {
        let z = (x - mu) / ls.exp();
        lp += -T::from_f64_lossy(0.5) * z * z - ls - half_ln_2pi;
        if dist == ContinuousDist::TanhSquashed {
            let t = x.tanh();
            lp -= (T::one() - t * t + T::from_f64_lossy(TANH_EPS)).ln();
        }
    }
    lp
}

/// Joint log-probability of a stored action under `out`.
pub fn log_prob<T: Real>(
    out: &PolicyOutput<T>,
    dist: ContinuousDist,
    branches: &[usize],
    raw: &[T],
    discrete: &[usize],
) -> T {
    let mut lp = continuous_log_prob(out, dist, raw);
    for ((_, z), &a) in branch_slices(&out.logits, branches).zip(discrete) {
        lp += log_softmax(z)[a];
    }
    lp
}

/// Accumulates `scale * d log_prob / d outputs` into `grad`.
pub fn log_prob_grad<T: Real>(
    out: &PolicyOutput<T>,
    branches: &[usize],
    raw: &[T],
    discrete: &[usize],
    scale: T,
    grad: &mut OutputGrad<T>,
) {
    for (i, ((&mu, &ls), &x)) in out.means.iter().zip(&out.log_stds).zip(raw).enumerate() {
        let inv = (-ls).exp();
        let z = (x - mu) * inv;
        grad.means[i] += scale * z * inv;
        grad.log_stds[i] += scale * (z * z - T::one());
    }
    for ((start, z), &a) in branch_slices(&out.logits, branches).zip(discrete) {
        for (j, lp) in log_softmax(z).into_iter().enumerate() {
            let onehot = if j == a { T::one() } else { T::zero() };
            grad.logits[start + j] += scale * (onehot - lp.exp());
        }
    }
}

/// Gaussian entropy plus the entropy of every branch. For the squashed
/// distribution the Gaussian term is used as is.
pub fn entropy<T: Real>(out: &PolicyOutput<T>, branches: &[usize]) -> T {
    let per_dim = T::from_f64_lossy(0.5 + HALF_LN_2PI);
    let mut h: T = out.log_stds.iter().map(|&ls| per_dim + ls).sum();
    for (_, z) in branch_slices(&out.logits, branches) {
        h -= log_softmax(z)
            .into_iter()
            .map(|lp| lp.exp() * lp)
            .sum::<T>();
    }
    h
}

/// Accumulates `scale * d entropy / d outputs` into `grad`.
pub fn entropy_grad<T: Real>(
    out: &PolicyOutput<T>,
    branches: &[usize],
    scale: T,
    grad: &mut OutputGrad<T>,
) {
    for g in &mut grad.log_stds {
        *g += scale;
    }
    for (start, z) in branch_slices(&out.logits, branches) {
        let lps = log_softmax(z);
        let h = -lps.iter().map(|&lp| lp.exp() * lp).sum::<T>();
        for (j, lp) in lps.into_iter().enumerate() {
            grad.logits[start + j] += scale * (-(lp.exp()) * (lp + h));
        }
    }
}

pub fn sample_action<T: Real, R: Rng + ?Sized>(
    out: &PolicyOutput<T>,
    dist: ContinuousDist,
    branches: &[usize],
    rng: &mut R,
) -> ActionSample {
    let mut raw = Vec::with_capacity(out.means.len());
    for (&mu, &ls) in out.means.iter().zip(&out.log_stds) {
        let eps: f64 = rng.sample(StandardNormal);
        let (mu, sd) = (mu.to_f64().unwrap_or(0.0), ls.to_f64().unwrap_or(0.0).exp());
        raw.push(if sd == 0.0 { mu } else { mu + sd * eps });
    }
    let mut discrete = Vec::with_capacity(branches.len());
    for (_, z) in branch_slices(&out.logits, branches) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = z.len() - 1;
        for (j, lp) in log_softmax(z).into_iter().enumerate() {
            acc += lp.to_f64().unwrap_or(0.0).exp();
            if u < acc {
                pick = j;
                break;
            }
        }
        discrete.push(pick);
    }
    let raw_t: Vec<T> = raw.iter().map(|&v| T::from_f64_lossy(v)).collect();
    ActionSample {
        continuous: raw.iter().map(|&v| dist.squash(v)).collect(),
        log_prob: log_prob(out, dist, branches, &raw_t, &discrete)
            .to_f64()
            .unwrap_or(f64::NAN),
        entropy: entropy(out, branches).to_f64().unwrap_or(f64::NAN),
        raw,
        discrete,
    }
}

/// Mode of the distribution: squashed means and per-branch argmax (lowest index on ties).
pub fn greedy_action<T: Real>(
    out: &PolicyOutput<T>,
    dist: ContinuousDist,
    branches: &[usize],
) -> (Vec<f64>, Vec<usize>) {
    let continuous = out
        .means
        .iter()
        .map(|m| dist.squash(m.to_f64().unwrap_or(0.0)))
        .collect();
    let discrete = branch_slices(&out.logits, branches)
        .map(|(_, z)| {
            let mut best = 0;
            for (j, &v) in z.iter().enumerate() {
                if v > z[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    (continuous, discrete)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn output(means: [f64; 3], log_stds: [f64; 3], logits: [f64; 4]) -> PolicyOutput<f64> {
        PolicyOutput {
            means: means.to_vec(),
            log_stds: log_stds.to_vec(),
            logits: logits.to_vec(),
            value: 0.0,
        }
    }

    #[test]
    fn zero_variance_sample_is_the_mean() {
        let out = output([0.3, -0.2, 0.9], [f64::NEG_INFINITY; 3], [0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_action(&out, ContinuousDist::ClippedGaussian, &[2, 2], &mut rng);
        assert_eq!(s.continuous, vec![0.3, -0.2, 0.9]);
    }

    #[test]
    fn equal_logits_sample_evenly() {
        let out = output([0.0; 3], [0.0; 3], [0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut ones = [0usize; 2];
        for _ in 0..n {
            let s = sample_action(&out, ContinuousDist::ClippedGaussian, &[2, 2], &mut rng);
            ones[0] += s.discrete[0];
            ones[1] += s.discrete[1];
        }
        for c in ones {
            assert!((c as f64 / n as f64 - 0.5).abs() < 0.02, "{c}");
        }
    }

    #[test]
    fn stored_log_prob_is_recomputable_and_actions_clamped() {
        let out = output([0.8, -1.5, 0.0], [0.2, -0.3, 0.5], [0.4, -0.1, 1.2, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dist in [
            ContinuousDist::ClippedGaussian,
            ContinuousDist::TanhSquashed,
        ] {
            for _ in 0..200 {
                let s = sample_action(&out, dist, &[2, 2], &mut rng);
                assert!(s.continuous.iter().all(|v| (-1.0..=1.0).contains(v)));
                let lp = log_prob(&out, dist, &[2, 2], &s.raw, &s.discrete);
                assert!((lp - s.log_prob).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let out = output([0.1, -0.4, 0.7], [-0.2, 0.3, 0.1], [0.5, -0.5, 0.2, 0.9]);
        let raw = [0.35, -1.2, 0.6];
        let disc = [1, 0];
        let mut g = OutputGrad::zeros(&out);
        log_prob_grad(&out, &[2, 2], &raw, &disc, 1.0, &mut g);
        let mut ge = OutputGrad::zeros(&out);
        entropy_grad(&out, &[2, 2], 1.0, &mut ge);
        let h = 1e-6;
        let probe = |f: &dyn Fn(&PolicyOutput<f64>) -> f64,
                     pick: &dyn Fn(&mut PolicyOutput<f64>) -> &mut f64| {
            let (mut p, mut m) = (out.clone(), out.clone());
            *pick(&mut p) += h;
            *pick(&mut m) -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        };
        let lp = |o: &PolicyOutput<f64>| {
            log_prob(o, ContinuousDist::ClippedGaussian, &[2, 2], &raw, &disc)
        };
        let en = |o: &PolicyOutput<f64>| entropy(o, &[2, 2]);
        for i in 0..3 {
            assert!((probe(&lp, &|o| &mut o.means[i]) - g.means[i]).abs() < 1e-6);
            assert!((probe(&lp, &|o| &mut o.log_stds[i]) - g.log_stds[i]).abs() < 1e-6);
            assert!((probe(&en, &|o| &mut o.log_stds[i]) - ge.log_stds[i]).abs() < 1e-6);
        }
        for j in 0..4 {
            assert!((probe(&lp, &|o| &mut o.logits[j]) - g.logits[j]).abs() < 1e-6);
            assert!((probe(&en, &|o| &mut o.logits[j]) - ge.logits[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn greedy_uses_mode() {
        let out = output([2.0, -0.5, 0.0], [0.0; 3], [0.0, 0.0, -1.0, 1.0]);
        let (c, d) = greedy_action(&out, ContinuousDist::ClippedGaussian, &[2, 2]);
        assert_eq!(c, vec![1.0, -0.5, 0.0]);
        assert_eq!(d, vec![0, 1]);
    }
}
