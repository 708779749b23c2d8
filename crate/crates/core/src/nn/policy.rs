use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv3x3, conv3x3_backward, dense, dense_backward, max_pool2, max_pool2_backward,
    swish_backward, swish_vec,
};
use super::{ContinuousDist, NnError, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Length of the (stacked) vector observation.
    pub vector_dim: usize,
    /// Side of the square camera grid; 0 disables the visual encoder.
    pub visual_side: usize,
    /// Output channels of the three encoder stacks.
    pub channels: Vec<usize>,
    pub res_blocks: usize,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub continuous_dim: usize,
    /// Number of choices of each discrete branch.
    pub branches: Vec<usize>,
    pub continuous_dist: ContinuousDist,
    pub log_std_init: f64,
    /// Weight scale of the policy heads relative to fan-in initialization.
    pub policy_head_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            vector_dim: 42,
            visual_side: 16,
            channels: vec![16, 32, 32],
            res_blocks: 2,
            hidden_units: 128,
            num_layers: 2,
            continuous_dim: 3,
            branches: vec![2, 2],
            continuous_dist: ContinuousDist::ClippedGaussian,
            log_std_init: 0.0,
            policy_head_scale: 0.01,
        }
    }
}

impl NetConfig {
    pub fn visual_len(&self) -> usize {
        self.visual_side * self.visual_side
    }

    pub fn input_len(&self) -> usize {
        self.vector_dim + self.visual_len()
    }

    pub fn logits_len(&self) -> usize {
        self.branches.iter().sum()
    }
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone)]
struct Conv {
    w: Range<usize>,
    b: Range<usize>,
    cin: usize,
    cout: usize,
    side: usize,
}

#[derive(Debug, Clone)]
struct Dense {
    w: Range<usize>,
    b: Range<usize>,
    nin: usize,
    nout: usize,
}

#[derive(Debug, Clone)]
struct Stack {
    conv: Conv,
    blocks: Vec<(Conv, Conv)>,
}

struct LayoutBuilder {
    next: usize,
    groups: Vec<ParamGroup>,
}

impl LayoutBuilder {
    fn take(&mut self, name: String, len: usize) -> Range<usize> {
        let r = self.next..self.next + len;
        self.next += len;
        self.groups.push(ParamGroup {
            name,
            range: r.clone(),
        });
        r
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, side: usize) -> Conv {
        Conv {
            w: self.take(format!("{name}.w"), cout * cin * 9),
            b: self.take(format!("{name}.b"), cout),
            cin,
            cout,
            side,
        }
    }

    fn dense(&mut self, name: &str, nin: usize, nout: usize) -> Dense {
        Dense {
            w: self.take(format!("{name}.w"), nout * nin),
            b: self.take(format!("{name}.b"), nout),
            nin,
            nout,
        }
    }
}

/// Architecture and parameter layout. Parameters live outside in a flat slice
/// so optimizers and checkpoints can treat them uniformly.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub config: NetConfig,
    stacks: Vec<Stack>,
    encoded_len: usize,
    trunk: Vec<Dense>,
    mean: Dense,
    log_std: Range<usize>,
    logits: Dense,
    value: Dense,
    groups: Vec<ParamGroup>,
    n_params: usize,
}

/// Raw network outputs for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput<T> {
    pub means: Vec<T>,
    pub log_stds: Vec<T>,
    /// Concatenated logits of all discrete branches.
    pub logits: Vec<T>,
    pub value: T,
}

/// Gradient of a scalar loss with respect to every output of [`PolicyOutput`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad<T> {
    pub means: Vec<T>,
    pub log_stds: Vec<T>,
    pub logits: Vec<T>,
    pub value: T,
}

impl<T: Real> OutputGrad<T> {
    pub fn zeros(out: &PolicyOutput<T>) -> Self {
        Self {
            means: vec![T::zero(); out.means.len()],
            log_stds: vec![T::zero(); out.log_stds.len()],
            logits: vec![T::zero(); out.logits.len()],
            value: T::zero(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let pairs = self
            .means
            .iter_mut()
            .zip(&other.means)
            .chain(self.log_stds.iter_mut().zip(&other.log_stds))
            .chain(self.logits.iter_mut().zip(&other.logits));
        for (a, &b) in pairs {
            *a += scale * b;
        }
        self.value += scale * other.value;
    }
}

#[derive(Debug, Clone, Default)]
struct StackCache<T> {
    input: Vec<T>,
    conv_out_len: usize,
    pool_arg: Vec<u32>,
    /// Per residual block: block input, swish(input), conv1 output, swish(conv1 output).
    blocks: Vec<[Vec<T>; 4]>,
}

/// Intermediate values of one forward pass, needed by `backward`.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    stacks: Vec<StackCache<T>>,
    encoder_pre: Vec<T>,
    /// Input to each trunk layer, then the final trunk activation.
    trunk_inputs: Vec<Vec<T>>,
    trunk_pre: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    /// Winning indices of every max pool, concatenated. Two passes with equal
    /// patterns share the same differentiable piece of the network.
    pub fn pool_pattern(&self) -> Vec<u32> {
        self.stacks
            .iter()
            .flat_map(|s| s.pool_arg.iter().copied())
            .collect()
    }
}

impl PolicyNet {
    pub fn new(config: NetConfig) -> Self {
        let mut b = LayoutBuilder {
            next: 0,
            groups: Vec::new(),
        };
        let mut stacks = Vec::new();
        let mut encoded_len = 0;
        if config.visual_side > 0 {
            let mut cin = 1;
            let mut side = config.visual_side;
            for (s, &cout) in config.channels.iter().enumerate() {
                let conv = b.conv(&format!("enc{s}.conv"), cin, cout, side);
                side /= 2;
                let blocks = (0..config.res_blocks)
                    .map(|r| {
                        (
                            b.conv(&format!("enc{s}.res{r}.conv0"), cout, cout, side),
                            b.conv(&format!("enc{s}.res{r}.conv1"), cout, cout, side),
                        )
                    })
                    .collect();
                stacks.push(Stack { conv, blocks });
                cin = cout;
            }
            encoded_len = cin * side * side;
        }
        let mut trunk = Vec::new();
        let mut nin = encoded_len + config.vector_dim;
        for l in 0..config.num_layers {
            trunk.push(b.dense(&format!("trunk{l}"), nin, config.hidden_units));
            nin = config.hidden_units;
        }
        let mean = b.dense("head.mean", nin, config.continuous_dim);
        let log_std = b.take("head.log_std".into(), config.continuous_dim);
        let logits = b.dense("head.logits", nin, config.logits_len());
        let value = b.dense("head.value", nin, 1);
        Self {
            config,
            stacks,
            encoded_len,
            trunk,
            mean,
            log_std,
            logits,
            value,
            n_params: b.next,
            groups: b.groups,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    /// Fan-in scaled uniform weights (`±sqrt(3 / fan_in)`), zero biases,
    /// policy heads shrunk by `policy_head_scale`, log-std at `log_std_init`.
    pub fn init_params<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut p = vec![T::zero(); self.n_params];
        let mut fill = |w: &Range<usize>, fan_in: usize, scale: f64| {
            let bound = (3.0 / fan_in as f64).sqrt() * scale;
            for v in &mut p[w.clone()] {
                *v = T::from_f64_lossy(rng.random_range(-bound..=bound));
            }
        };
        for s in &self.stacks {
            fill(&s.conv.w, s.conv.cin * 9, 1.0);
            for (c0, c1) in &s.blocks {
                fill(&c0.w, c0.cin * 9, 1.0);
                fill(&c1.w, c1.cin * 9, 1.0);
            }
        }
        for d in &self.trunk {
            fill(&d.w, d.nin, 1.0);
        }
        let head_scale = self.config.policy_head_scale;
        fill(&self.mean.w, self.mean.nin, head_scale);
        fill(&self.logits.w, self.logits.nin, head_scale);
        fill(&self.value.w, self.value.nin, 1.0);
        for v in &mut p[self.log_std.clone()] {
            *v = T::from_f64_lossy(self.config.log_std_init);
        }
        p
    }

    pub fn forward<T: Real>(&self, params: &[T], input: &[T]) -> Result<PolicyOutput<T>, NnError> {
        self.forward_cached(params, input).map(|(o, _)| o)
    }

    /// Forward pass over `[vector ‖ visual]` that also records what `backward` needs.
    pub fn forward_cached<T: Real>(
        &self,
        params: &[T],
        input: &[T],
    ) -> Result<(PolicyOutput<T>, ForwardCache<T>), NnError> {
        if input.len() != self.config.input_len() {
            return Err(NnError::ShapeMismatch {
                expected: self.config.input_len(),
                got: input.len(),
            });
        }
        debug_assert_eq!(params.len(), self.n_params);
        let (vector, visual) = input.split_at(self.config.vector_dim);
        let mut cache = ForwardCache::default();

        let mut trunk_in = Vec::with_capacity(self.encoded_len + vector.len());
        if !self.stacks.is_empty() {
            let mut x = visual.to_vec();
            for s in &self.stacks {
                let c = &s.conv;
                let conv_out = conv3x3(
                    &x,
                    &params[c.w.clone()],
                    &params[c.b.clone()],
                    c.cin,
                    c.cout,
                    c.side,
                );
                let (pooled, pool_arg) = max_pool2(&conv_out, c.cout, c.side);
                let mut sc = StackCache {
                    input: std::mem::take(&mut x),
                    conv_out_len: conv_out.len(),
                    pool_arg,
                    blocks: Vec::with_capacity(s.blocks.len()),
                };
                x = pooled;
                for (c0, c1) in &s.blocks {
                    let a0 = swish_vec(&x);
                    let h = conv3x3(
                        &a0,
                        &params[c0.w.clone()],
                        &params[c0.b.clone()],
                        c0.cin,
                        c0.cout,
                        c0.side,
                    );
                    let a1 = swish_vec(&h);
                    let y = conv3x3(
                        &a1,
                        &params[c1.w.clone()],
                        &params[c1.b.clone()],
                        c1.cin,
                        c1.cout,
                        c1.side,
                    );
                    let out: Vec<T> = x.iter().zip(&y).map(|(&a, &b)| a + b).collect();
                    sc.blocks.push([std::mem::replace(&mut x, out), a0, h, a1]);
                }
                cache.stacks.push(sc);
            }
            trunk_in.extend(swish_vec(&x));
            cache.encoder_pre = x;
        }
        trunk_in.extend_from_slice(vector);

        let mut h = trunk_in;
        for d in &self.trunk {
            let z = dense(
                &h,
                &params[d.w.clone()],
                &params[d.b.clone()],
                d.nin,
                d.nout,
            );
            let next = swish_vec(&z);
            cache.trunk_inputs.push(std::mem::replace(&mut h, next));
            cache.trunk_pre.push(z);
        }
        let means = dense(
            &h,
            &params[self.mean.w.clone()],
            &params[self.mean.b.clone()],
            self.mean.nin,
            self.mean.nout,
        );
        let logits = dense(
            &h,
            &params[self.logits.w.clone()],
            &params[self.logits.b.clone()],
            self.logits.nin,
            self.logits.nout,
        );
        let value = dense(
            &h,
            &params[self.value.w.clone()],
            &params[self.value.b.clone()],
            self.value.nin,
            1,
        )[0];
        let log_stds = params[self.log_std.clone()].to_vec();
        cache.trunk_inputs.push(h);
        Ok((
            PolicyOutput {
                means,
                log_stds,
                logits,
                value,
            },
            cache,
        ))
    }

    /// Accumulates `d loss / d params` into `grads` given the loss gradient
    /// with respect to the outputs of the cached forward pass.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        cache: &ForwardCache<T>,
        d_out: &OutputGrad<T>,
        grads: &mut [T],
    ) {
        let h = cache.trunk_inputs.last().expect("forward cache");
        let mut dh = vec![T::zero(); h.len()];
        for (layer, g) in [
            (&self.mean, &d_out.means[..]),
            (&self.logits, &d_out.logits[..]),
            (&self.value, std::slice::from_ref(&d_out.value)),
        ] {
            let (gw, gb) = split_two(grads, &layer.w, &layer.b);
            let d = dense_backward(h, &params[layer.w.clone()], g, gw, gb, layer.nin);
            dh.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        for (g, &d) in grads[self.log_std.clone()].iter_mut().zip(&d_out.log_stds) {
            *g += d;
        }

        for (l, d) in self.trunk.iter().enumerate().rev() {
            let dz = swish_backward(&cache.trunk_pre[l], &dh);
            let (gw, gb) = split_two(grads, &d.w, &d.b);
            dh = dense_backward(
                &cache.trunk_inputs[l],
                &params[d.w.clone()],
                &dz,
                gw,
                gb,
                d.nin,
            );
        }

        if self.stacks.is_empty() {
            return;
        }
        let mut dx = swish_backward(&cache.encoder_pre, &dh[..self.encoded_len]);
        for (si, (s, sc)) in self.stacks.iter().zip(&cache.stacks).enumerate().rev() {
            for ((c0, c1), [block_in, a0, pre1, a1]) in s.blocks.iter().zip(&sc.blocks).rev() {
                let (gw, gb) = split_two(grads, &c1.w, &c1.b);
                let da1 = conv3x3_backward(
                    a1,
                    &params[c1.w.clone()],
                    &dx,
                    gw,
                    gb,
                    c1.cin,
                    c1.cout,
                    c1.side,
                    true,
                );
                let dpre1 = swish_backward(pre1, &da1);
                let (gw, gb) = split_two(grads, &c0.w, &c0.b);
                let da0 = conv3x3_backward(
                    a0,
                    &params[c0.w.clone()],
                    &dpre1,
                    gw,
                    gb,
                    c0.cin,
                    c0.cout,
                    c0.side,
                    true,
                );
                let dskip = swish_backward(block_in, &da0);
                dx.iter_mut().zip(dskip).for_each(|(a, b)| *a += b);
            }
            let d_conv = max_pool2_backward(&sc.pool_arg, &dx, sc.conv_out_len);
            let c = &s.conv;
            let (gw, gb) = split_two(grads, &c.w, &c.b);
            dx = conv3x3_backward(
                &sc.input,
                &params[c.w.clone()],
                &d_conv,
                gw,
                gb,
                c.cin,
                c.cout,
                c.side,
                si > 0,
            );
        }
    }

    /// Checks a gradient vector for NaN/inf, naming the first offending group.
    pub fn check_finite<T: Real>(&self, grads: &[T]) -> Result<(), NnError> {
        for g in &self.groups {
            if grads[g.range.clone()].iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    group: g.name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Disjoint mutable views of two non-overlapping ranges (`w` precedes `b`).
fn split_two<'a, T>(
    grads: &'a mut [T],
    w: &Range<usize>,
    b: &Range<usize>,
) -> (&'a mut [T], &'a mut [T]) {
    debug_assert!(w.end <= b.start);
    let (left, right) = grads.split_at_mut(b.start);
    (&mut left[w.clone()], &mut right[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> NetConfig {
        NetConfig {
            vector_dim: 5,
            visual_side: 8,
            channels: vec![2, 3, 3],
            res_blocks: 2,
            hidden_units: 6,
            num_layers: 2,
            ..NetConfig::default()
        }
    }

    #[test]
    fn default_parameter_count() {
        let net = PolicyNet::new(NetConfig::default());
        let enc = (16 * 9 + 16)
            + 4 * (16 * 16 * 9 + 16)
            + (32 * 16 * 9 + 32)
            + 4 * (32 * 32 * 9 + 32)
            + (32 * 32 * 9 + 32)
            + 4 * (32 * 32 * 9 + 32);
        let trunk = (128 + 42) * 128 + 128 + 128 * 128 + 128;
        let heads = 128 * 3 + 3 + 3 + 128 * 4 + 4 + 128 + 1;
        assert_eq!(net.n_params(), enc + trunk + heads);
        let total: usize = net.param_groups().iter().map(|g| g.range.len()).sum();
        assert_eq!(total, net.n_params());
    }

    #[test]
    fn output_arity_and_determinism() {
        let net = PolicyNet::new(small());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p: Vec<f32> = net.init_params(&mut rng);
        let x: Vec<f32> = (0..net.config.input_len())
            .map(|i| (i as f32 * 0.37).sin())
            .collect();
        let a = net.forward(&p, &x).unwrap();
        let b = net.forward(&p, &x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.means.len() + a.log_stds.len() + a.logits.len() + 1, 11);
        assert!(net.forward(&p, &x[1..]).is_err());
    }

    #[test]
    fn zero_logit_head_gives_even_branches() {
        let net = PolicyNet::new(small());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p: Vec<f64> = net.init_params(&mut rng);
        let g = net
            .param_groups()
            .iter()
            .filter(|g| g.name.starts_with("head.logits"))
            .map(|g| g.range.clone())
            .collect::<Vec<_>>();
        for r in g {
            p[r].iter_mut().for_each(|v| *v = 0.0);
        }
        let x: Vec<f64> = (0..net.config.input_len())
            .map(|i| i as f64 * 0.01)
            .collect();
        let out = net.forward(&p, &x).unwrap();
        assert!(out.logits.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn visual_shift_changes_output() {
        let net = PolicyNet::new(NetConfig {
            vector_dim: 4,
            ..NetConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: Vec<f32> = net.init_params(&mut rng);
        let mut x = vec![0.0f32; net.config.input_len()];
        for r in 0..16 {
            for c in 0..16 {
                x[4 + r * 16 + c] = ((r * 3 + c * c) % 7) as f32 / 7.0;
            }
        }
        let mut shifted = vec![0.0f32; x.len()];
        for r in 0..16 {
            for c in 1..16 {
                shifted[4 + r * 16 + c] = x[4 + r * 16 + c - 1];
            }
        }
        let a = net.forward(&p, &x).unwrap();
        let b = net.forward(&p, &shifted).unwrap();
        assert_ne!(a.value, b.value);
        assert_ne!(a.means, b.means);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let net = PolicyNet::new(small());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = net.init_params(&mut rng);
        let x: Vec<f64> = (0..net.config.input_len())
            .map(|i| ((i * 13) % 7) as f64 * 0.1)
            .collect();
        let (out, cache) = net.forward_cached(&p, &x).unwrap();
        let mut d = OutputGrad::zeros(&out);
        d.value = 1.0;
        let mut g = vec![0.0; net.n_params()];
        net.backward(&p, &cache, &d, &mut g);
        for grp in net.param_groups() {
            if grp.name.starts_with("head.mean")
                || grp.name.starts_with("head.logits")
                || grp.name == "head.log_std"
            {
                assert!(
                    g[grp.range.clone()].iter().all(|&v| v == 0.0),
                    "{}",
                    grp.name
                );
            }
        }
        assert!(g.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradients_are_linear_in_the_loss() {
        let net = PolicyNet::new(small());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = net.init_params(&mut rng);
        let x: Vec<f64> = (0..net.config.input_len())
            .map(|i| ((i * 5) % 11) as f64 * 0.05)
            .collect();
        let (out, cache) = net.forward_cached(&p, &x).unwrap();
        let mut d1 = OutputGrad::zeros(&out);
        d1.value = 0.7;
        d1.means[1] = -0.3;
        let mut d2 = OutputGrad::zeros(&out);
        d2.logits[2] = 1.1;
        d2.log_stds[0] = 0.4;
        let mut both = d1.clone();
        both.add_scaled(&d2, 1.0);
        let run = |d: &OutputGrad<f64>| {
            let mut g = vec![0.0; net.n_params()];
            net.backward(&p, &cache, d, &mut g);
            g
        };
        let (g1, g2, g12) = (run(&d1), run(&d2), run(&both));
        for i in 0..g1.len() {
            assert!((g1[i] + g2[i] - g12[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn value_mse_gradient_matches_finite_differences() {
        let net = PolicyNet::new(small());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p: Vec<f64> = net.init_params(&mut rng);
        let x: Vec<f64> = (0..net.config.input_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let target = 0.8;
        let loss = |p: &[f64]| {
            let v = net.forward(p, &x).unwrap().value;
            0.5 * (v - target) * (v - target)
        };
        let (out, cache) = net.forward_cached(&p, &x).unwrap();
        let mut d = OutputGrad::zeros(&out);
        d.value = out.value - target;
        let mut g = vec![0.0; net.n_params()];
        net.backward(&p, &cache, &d, &mut g);
        let pattern = cache.pool_pattern();
        let h = 1e-4;
        for grp in net.param_groups() {
            let (mut num2, mut diff2, mut ana2) = (0.0, 0.0, 0.0);
            for i in grp.range.clone() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp[i] += h;
                pm[i] -= h;
                let same =
                    |q: &[f64]| net.forward_cached(q, &x).unwrap().1.pool_pattern() == pattern;
                if !same(&pp) || !same(&pm) {
                    continue;
                }
                let n = (loss(&pp) - loss(&pm)) / (2.0 * h);
                num2 += n * n;
                ana2 += g[i] * g[i];
                diff2 += (n - g[i]) * (n - g[i]);
            }
            let scale = num2.max(ana2).sqrt();
            if scale > 1e-12 {
                assert!(
                    diff2.sqrt() / scale < 1e-4,
                    "{}: {}",
                    grp.name,
                    diff2.sqrt() / scale
                );
            }
        }
    }

    #[test]
    fn vector_only_network() {
        let net = PolicyNet::new(NetConfig {
            vector_dim: 3,
            visual_side: 0,
            hidden_units: 8,
            ..NetConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f32> = net.init_params(&mut rng);
        let out = net.forward(&p, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(out.means.len(), 3);
        assert!(net
            .param_groups()
            .iter()
            .all(|g| !g.name.starts_with("enc")));
    }
}
