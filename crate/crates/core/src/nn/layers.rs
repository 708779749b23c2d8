//! Forward and backward kernels for the fixed layer types of the policy net.
//! Feature maps are channel-major (`[c][y][x]`); dense weights are row-major
//! `[out][in]`.

use super::Real;

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `x * sigmoid(x)`.
#[inline]
pub fn swish<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub fn swish_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s + x * s * (T::one() - s)
}

pub fn swish_vec<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| swish(v)).collect()
}

/// `upstream * swish'(pre)`, elementwise.
pub fn swish_backward<T: Real>(pre: &[T], upstream: &[T]) -> Vec<T> {
    pre.iter()
        .zip(upstream)
        .map(|(&p, &g)| g * swish_grad(p))
        .collect()
}

/// Valid output range along one axis for kernel tap `k` of a 3x3 same-padded conv.
#[inline]
fn tap_range(k: usize, side: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { side - 1 } else { side };
    (lo, hi)
}

/// 3x3 convolution, stride 1, zero padding 1. `w` is `[cout][cin][3][3]`.
pub fn conv3x3<T: Real>(
    input: &[T],
    w: &[T],
    b: &[T],
    cin: usize,
    cout: usize,
    side: usize,
) -> Vec<T> {
    let plane = side * side;
    debug_assert_eq!(input.len(), cin * plane);
    let mut out = vec![T::zero(); cout * plane];
    for o in 0..cout {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = tap_range(ky, side);
                for kx in 0..3 {
                    let wv = w[((o * cin + i) * 3 + ky) * 3 + kx];
                    let (x0, x1) = tap_range(kx, side);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let drow = &mut dst[y * side + x0..y * side + x1];
                        let srow = &src[sy * side + x0 + kx - 1..sy * side + x1 + kx - 1];
                        for (d, &s) in drow.iter_mut().zip(srow) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients into `dw`/`db` and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Real>(
    input: &[T],
    w: &[T],
    d_out: &[T],
    dw: &mut [T],
    db: &mut [T],
    cin: usize,
    cout: usize,
    side: usize,
    need_input_grad: bool,
) -> Vec<T> {
    let plane = side * side;
    let mut d_in = if need_input_grad {
        vec![T::zero(); cin * plane]
    } else {
        Vec::new()
    };
    for o in 0..cout {
        let g = &d_out[o * plane..(o + 1) * plane];
        db[o] += g.iter().copied().sum::<T>();
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = tap_range(ky, side);
                for kx in 0..3 {
                    let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                    let (x0, x1) = tap_range(kx, side);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let grow = &g[y * side + x0..y * side + x1];
                        let srow = &src[sy * side + x0 + kx - 1..sy * side + x1 + kx - 1];
                        for (&gv, &sv) in grow.iter().zip(srow) {
                            acc += gv * sv;
                        }
                    }
                    dw[widx] += acc;
                    if need_input_grad {
                        let wv = w[widx];
                        let dst = &mut d_in[i * plane..(i + 1) * plane];
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let grow = &g[y * side + x0..y * side + x1];
                            let drow = &mut dst[sy * side + x0 + kx - 1..sy * side + x1 + kx - 1];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// 2x2 max pool with stride 2. Returns the pooled map and, per output, the
/// flat input index of the winner (first maximum in row-major order).
pub fn max_pool2<T: Real>(input: &[T], channels: usize, side: usize) -> (Vec<T>, Vec<u32>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(channels * half * half);
    let mut arg = Vec::with_capacity(channels * half * half);
    for c in 0..channels {
        for y in 0..half {
            for x in 0..half {
                let mut best_idx = c * side * side + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = c * side * side + (2 * y + dy) * side + 2 * x + dx;
                    if input[idx] > input[best_idx] {
                        best_idx = idx;
                    }
                }
                out.push(input[best_idx]);
                arg.push(best_idx as u32);
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Real>(argmax: &[u32], d_out: &[T], input_len: usize) -> Vec<T> {
    let mut d_in = vec![T::zero(); input_len];
    for (&a, &g) in argmax.iter().zip(d_out) {
        d_in[a as usize] += g;
    }
    d_in
}

/// `w x + b` with `w` as `[nout][nin]`.
pub fn dense<T: Real>(x: &[T], w: &[T], b: &[T], nin: usize, nout: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), nin);
    (0..nout)
        .map(|j| {
            let row = &w[j * nin..(j + 1) * nin];
            b[j] + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>()
        })
        .collect()
}

/// Accumulates `dw += d_out ⊗ x`, `db += d_out` and returns `wᵀ d_out`.
pub fn dense_backward<T: Real>(
    x: &[T],
    w: &[T],
    d_out: &[T],
    dw: &mut [T],
    db: &mut [T],
    nin: usize,
) -> Vec<T> {
    let mut d_in = vec![T::zero(); nin];
    for (j, &g) in d_out.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        db[j] += g;
        let row = &w[j * nin..(j + 1) * nin];
        let drow = &mut dw[j * nin..(j + 1) * nin];
        for k in 0..nin {
            drow[k] += g * x[k];
            d_in[k] += g * row[k];
        }
    }
    d_in
}
