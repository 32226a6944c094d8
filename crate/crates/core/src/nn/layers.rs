//! Single-example layer kernels over HWC buffers.
//!
//! Every function works on one image at a time so that per-example
//! gradients fall out of the backward pass without extra bookkeeping.

pub(crate) const GROUP_NORM_EPS: f64 = 1e-5;

/// Spatial geometry of an HWC activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }
}

/// Mirror an HWC image along its vertical axis.
pub(crate) fn flip_horizontal(image: &[f64], dims: Dims, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(image.len());
    let c = dims.channels;
    for y in 0..dims.height {
        for x in (0..dims.width).rev() {
            let base = (y * dims.width + x) * c;
            out.extend_from_slice(&image[base..base + c]);
        }
    }
}

/// `c = a · b + beta · c` for row-major `a (m×k)` and `b (k×n)`. Either
/// operand may be read transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover every element addressed by the given
    // dimensions and strides, checked by the assertion above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Expand an HWC image into a `(H·W) × (k·k·C)` patch matrix for a
/// stride-1 "same" convolution. Column order matches the `[k][k][in][out]`
/// weight layout.
pub(crate) fn im2col(input: &[f64], dims: Dims, kernel: usize, patches: &mut Vec<f64>) {
    let pad = kernel / 2;
    let (h, w, cin) = (dims.height, dims.width, dims.channels);
    let row_len = kernel * kernel * cin;
    patches.clear();
    patches.resize(h * w * row_len, 0.0);
    for y in 0..h {
        for x in 0..w {
            let row = &mut patches[(y * w + x) * row_len..(y * w + x + 1) * row_len];
            for ky in 0..kernel {
                let iy = y + ky;
                if iy < pad || iy - pad >= h {
                    continue;
                }
                let iy = iy - pad;
                for kx in 0..kernel {
                    let ix = x + kx;
                    if ix < pad || ix - pad >= w {
                        continue;
                    }
                    let ix = ix - pad;
                    let dst = (ky * kernel + kx) * cin;
                    row[dst..dst + cin]
                        .copy_from_slice(&input[(iy * w + ix) * cin..(iy * w + ix + 1) * cin]);
                }
            }
        }
    }
}

/// Scatter-add a patch-matrix gradient back onto the HWC input.
fn col2im(grad_patches: &[f64], dims: Dims, kernel: usize, grad_input: &mut [f64]) {
    let pad = kernel / 2;
    let (h, w, cin) = (dims.height, dims.width, dims.channels);
    let row_len = kernel * kernel * cin;
    grad_input.fill(0.0);
    for y in 0..h {
        for x in 0..w {
            let row = &grad_patches[(y * w + x) * row_len..(y * w + x + 1) * row_len];
            for ky in 0..kernel {
                let iy = y + ky;
                if iy < pad || iy - pad >= h {
                    continue;
                }
                let iy = iy - pad;
                for kx in 0..kernel {
                    let ix = x + kx;
                    if ix < pad || ix - pad >= w {
                        continue;
                    }
                    let ix = ix - pad;
                    let src = (ky * kernel + kx) * cin;
                    let dst = &mut grad_input[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                    for (d, &g) in dst.iter_mut().zip(&row[src..src + cin]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// Stride-1 "same" convolution over a patch matrix from [`im2col`].
/// Weight layout is `[k][k][in][out]`.
pub(crate) fn conv2d_forward(
    patches: &[f64],
    dims: Dims,
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
    out_channels: usize,
    out: &mut [f64],
) {
    let positions = dims.positions();
    let row_len = kernel * kernel * dims.channels;
    for px in out.chunks_exact_mut(out_channels) {
        px.copy_from_slice(bias);
    }
    gemm(positions, row_len, out_channels, patches, false, weight, false, 1.0, out);
}

/// Accumulates weight/bias gradients and, when requested, overwrites
/// `grad_input` with the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    patches: &[f64],
    dims: Dims,
    weight: &[f64],
    kernel: usize,
    out_channels: usize,
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<(&mut [f64], &mut Vec<f64>)>,
) {
    let positions = dims.positions();
    let row_len = kernel * kernel * dims.channels;
    for g_px in grad_out.chunks_exact(out_channels) {
        for (b, &g) in grad_bias.iter_mut().zip(g_px) {
            *b += g;
        }
    }
    // dW (K × out) += Pᵀ (K × positions) · G (positions × out)
    gemm(row_len, positions, out_channels, patches, true, grad_out, false, 1.0, grad_weight);
    if let Some((gi, scratch)) = grad_input {
        // dP (positions × K) = G (positions × out) · Wᵀ (out × K)
        scratch.resize(positions * row_len, 0.0);
        gemm(positions, out_channels, row_len, grad_out, false, weight, true, 0.0, scratch);
        col2im(scratch, dims, kernel, gi);
    }
}

/// Group normalization statistics retained for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct GroupNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Normalize each channel group over all spatial positions, then apply the
/// per-channel affine transform. `out` receives the affine output.
pub(crate) fn group_norm_forward(
    input: &[f64],
    dims: Dims,
    groups: usize,
    gamma: &[f64],
    beta: &[f64],
    cache: &mut GroupNormCache,
    out: &mut [f64],
) {
    let c = dims.channels;
    let per_group = c / groups;
    let n = (dims.positions() * per_group) as f64;
    cache.normalized.resize(input.len(), 0.0);
    cache.inv_std.resize(groups, 0.0);
    for g in 0..groups {
        let lo = g * per_group;
        let hi = lo + per_group;
        let mut mean = 0.0;
        for p in 0..dims.positions() {
            mean += input[p * c + lo..p * c + hi].iter().sum::<f64>();
        }
        mean /= n;
        let mut var = 0.0;
        for p in 0..dims.positions() {
            for &v in &input[p * c + lo..p * c + hi] {
                let d = v - mean;
                var += d * d;
            }
        }
        var /= n;
        let inv_std = 1.0 / (var + GROUP_NORM_EPS).sqrt();
        cache.inv_std[g] = inv_std;
        for p in 0..dims.positions() {
            for ch in lo..hi {
                let i = p * c + ch;
                let xhat = (input[i] - mean) * inv_std;
                cache.normalized[i] = xhat;
                out[i] = gamma[ch] * xhat + beta[ch];
            }
        }
    }
}

#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub(crate) fn group_norm_backward(
    dims: Dims,
    groups: usize,
    gamma: &[f64],
    cache: &GroupNormCache,
    grad_out: &[f64],
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
    grad_input: &mut [f64],
) {
    let c = dims.channels;
    let per_group = c / groups;
    let n = (dims.positions() * per_group) as f64;
    for g in 0..groups {
        let lo = g * per_group;
        let hi = lo + per_group;
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for p in 0..dims.positions() {
            for ch in lo..hi {
                let i = p * c + ch;
                let dy = grad_out[i];
                let xhat = cache.normalized[i];
                grad_gamma[ch] += dy * xhat;
                grad_beta[ch] += dy;
                let dxhat = dy * gamma[ch];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
            }
        }
        let scale = cache.inv_std[g] / n;
        for p in 0..dims.positions() {
            for ch in lo..hi {
                let i = p * c + ch;
                let dxhat = grad_out[i] * gamma[ch];
                grad_input[i] =
                    scale * (n * dxhat - sum_dxhat - cache.normalized[i] * sum_dxhat_xhat);
            }
        }
    }
}

pub(crate) fn relu_in_place(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zero the gradient wherever the forward activation was clamped.
pub(crate) fn relu_backward_in_place(activation: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 max pool with stride 2. Records the flat source index of every output.
pub(crate) fn max_pool2_forward(input: &[f64], dims: Dims, out: &mut [f64], argmax: &mut Vec<u32>) {
    let (oh, ow, c) = (dims.height / 2, dims.width / 2, dims.channels);
    argmax.resize(oh * ow * c, 0);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * y) * dims.width + 2 * x) * c + ch;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * dims.width + 2 * x + dx) * c + ch;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                let o = (y * ow + x) * c + ch;
                out[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
}

pub(crate) fn max_pool2_backward(argmax: &[u32], grad_out: &[f64], grad_input: &mut [f64]) {
    grad_input.fill(0.0);
    for (&src, &g) in argmax.iter().zip(grad_out) {
        grad_input[src as usize] += g;
    }
}

/// `out = input · weight + bias`, weight layout `[in][out]`.
pub(crate) fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_out = bias.len();
    out.copy_from_slice(bias);
    for (i, &a) in input.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let row = &weight[i * n_out..(i + 1) * n_out];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += a * wv;
        }
    }
}

pub(crate) fn dense_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let n_out = grad_out.len();
    for (b, &g) in grad_bias.iter_mut().zip(grad_out) {
        *b += g;
    }
    for (i, &a) in input.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let row = &mut grad_weight[i * n_out..(i + 1) * n_out];
        for (gw, &g) in row.iter_mut().zip(grad_out) {
            *gw += a * g;
        }
    }
    if let Some(gi) = grad_input {
        for (i, slot) in gi.iter_mut().enumerate() {
            let row = &weight[i * n_out..(i + 1) * n_out];
            *slot = row.iter().zip(grad_out).map(|(w, g)| w * g).sum();
        }
    }
}

/// Numerically stable softmax; returns the log-sum-exp of `logits`.
pub(crate) fn softmax(logits: &[f64], out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_norm_output_is_standardized() {
        let dims = Dims {
            height: 4,
            width: 4,
            channels: 8,
        };
        let input: Vec<f64> = (0..dims.len())
            .map(|i| ((i * 37 % 101) as f64 - 40.0) * 0.3)
            .collect();
        let gamma = vec![1.0; 8];
        let beta = vec![0.0; 8];
        let mut cache = GroupNormCache::default();
        let mut out = vec![0.0; dims.len()];
        group_norm_forward(&input, dims, 4, &gamma, &beta, &mut cache, &mut out);
        for g in 0..4 {
            let vals: Vec<f64> = (0..dims.positions())
                .flat_map(|p| (g * 2..g * 2 + 2).map(move |c| p * 8 + c))
                .map(|i| cache.normalized[i])
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-4, "group {g} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "group {g} var {var}");
        }
    }

    /// Direct nested-loop convolution used as an oracle for the GEMM path.
    fn conv_direct(input: &[f64], dims: Dims, weight: &[f64], bias: &[f64], k: usize, cout: usize) -> Vec<f64> {
        let pad = k as isize / 2;
        let (h, w, cin) = (dims.height as isize, dims.width as isize, dims.channels);
        let mut out = vec![0.0; dims.positions() * cout];
        for y in 0..h {
            for x in 0..w {
                for co in 0..cout {
                    let mut acc = bias[co];
                    for ky in 0..k as isize {
                        for kx in 0..k as isize {
                            let (iy, ix) = (y + ky - pad, x + kx - pad);
                            if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                continue;
                            }
                            for ci in 0..cin {
                                let a = input[((iy * w + ix) as usize) * cin + ci];
                                let wi = (((ky as usize) * k + kx as usize) * cin + ci) * cout + co;
                                acc += a * weight[wi];
                            }
                        }
                    }
                    out[((y * w + x) as usize) * cout + co] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn gemm_convolution_matches_direct_loops() {
        let dims = Dims { height: 5, width: 6, channels: 3 };
        let (k, cout) = (3, 4);
        let input: Vec<f64> = (0..dims.len()).map(|i| ((i * 13 % 17) as f64) / 17.0 - 0.3).collect();
        let weight: Vec<f64> = (0..k * k * 3 * cout).map(|i| ((i * 7 % 11) as f64) / 11.0 - 0.5).collect();
        let bias = [0.1, -0.2, 0.3, 0.0];
        let mut patches = Vec::new();
        im2col(&input, dims, k, &mut patches);
        let mut out = vec![0.0; dims.positions() * cout];
        conv2d_forward(&patches, dims, &weight, &bias, k, cout, &mut out);
        let expected = conv_direct(&input, dims, &weight, &bias, k, cout);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let dims = Dims {
            height: 2,
            width: 2,
            channels: 1,
        };
        let input = [0.1, 0.7, -0.2, 0.3];
        let mut out = [0.0];
        let mut argmax = Vec::new();
        max_pool2_forward(&input, dims, &mut out, &mut argmax);
        assert_eq!(out[0], 0.7);
        let mut gi = [0.0; 4];
        max_pool2_backward(&argmax, &[2.0], &mut gi);
        assert_eq!(gi, [0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn flip_mirrors_columns() {
        let dims = Dims {
            height: 1,
            width: 3,
            channels: 2,
        };
        let img = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = Vec::new();
        flip_horizontal(&img, dims, &mut out);
        assert_eq!(out, vec![5.0, 6.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut p = [0.0; 3];
        let lse = softmax(&[1000.0, 1000.0, 1000.0], &mut p);
        assert!((lse - (1000.0 + 3f64.ln())).abs() < 1e-9);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
