//! Batched forward and backward kernels for every layer type.
//!
//! Backward functions accumulate parameter gradients into the slices they are
//! given (`+=`) and return the gradient with respect to the layer input.

use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::bail;
use crate::linalg::{gemm, View, ViewMut};
use crate::math::{exp, ln, sigmoid, sqrt};
use crate::Result;

/// Conv weights are stored as a `(kernel·C_in) × C_out` row-major matrix:
/// `w[(j·C_in + c_in)·C_out + c_out]` multiplies `x[t − (kernel−1) + j, c_in]`.
pub fn conv1d_forward(x: &Tensor, w: &[f64], bias: &[f64], kernel: usize, out: usize) -> Result<Tensor> {
    let cin = x.channels;
    if kernel == 0 || w.len() != kernel * cin * out || bias.len() != out {
        bail!(InvalidInput, "conv1d parameters do not match kernel {kernel}, {cin} -> {out} channels");
    }
    let l = x.length;
    let mut y = Tensor::zeros(x.batch, l, out);
    let mut pad = alloc::vec![0.0; (l + kernel - 1) * cin];
    for b in 0..x.batch {
        pad[(kernel - 1) * cin..].copy_from_slice(x.sample(b));
        // overlapping rows: row t is pad[t·C_in .. (t+kernel)·C_in]
        let cols = View {
            data: &pad,
            rows: l,
            cols: kernel * cin,
            row_stride: cin,
            col_stride: 1,
        };
        let yb = y.sample_mut(b);
        gemm(1.0, cols, View::row_major(w, kernel * cin, out), 0.0, ViewMut::row_major(yb, l, out));
        for row in yb.chunks_exact_mut(out) {
            for (v, bb) in row.iter_mut().zip(bias) {
                *v += bb;
            }
        }
    }
    Ok(y)
}

pub fn conv1d_backward(
    x: &Tensor,
    w: &[f64],
    kernel: usize,
    out: usize,
    dy: &Tensor,
    dw: &mut [f64],
    dbias: &mut [f64],
) -> Tensor {
    let cin = x.channels;
    let l = x.length;
    let mut dx = Tensor::zeros(x.batch, l, cin);
    let mut pad = alloc::vec![0.0; (l + kernel - 1) * cin];
    let mut dpad = alloc::vec![0.0; (l + kernel - 1) * cin];
    for b in 0..x.batch {
        pad[(kernel - 1) * cin..].copy_from_slice(x.sample(b));
        let cols = View {
            data: &pad,
            rows: l,
            cols: kernel * cin,
            row_stride: cin,
            col_stride: 1,
        };
        let dyb = dy.sample(b);
        gemm(
            1.0,
            cols.t(),
            View::row_major(dyb, l, out),
            1.0,
            ViewMut::row_major(dw, kernel * cin, out),
        );
        for row in dyb.chunks_exact(out) {
            for (g, v) in dbias.iter_mut().zip(row) {
                *g += v;
            }
        }
        dpad.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..kernel {
            let wj = View::row_major(&w[j * cin * out..(j + 1) * cin * out], cin, out).t();
            gemm(
                1.0,
                View::row_major(dyb, l, out),
                wj,
                1.0,
                ViewMut::row_major(&mut dpad[j * cin..j * cin + l * cin], l, cin),
            );
        }
        dx.sample_mut(b).copy_from_slice(&dpad[(kernel - 1) * cin..]);
    }
    dx
}

/// Saved state of a training-mode batchnorm pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

/// Per-channel mean and biased variance over batch and length.
fn channel_moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let c = x.channels;
    let count = (x.batch * x.length) as f64;
    let mut mean = alloc::vec![0.0; c];
    for row in x.data.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = alloc::vec![0.0; c];
    for row in x.data.chunks_exact(c) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= count);
    (mean, var)
}

/// Training-mode batchnorm; also returns the batch mean and variance.
pub fn batchnorm_forward_train(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Tensor, BnCache, Vec<f64>, Vec<f64>)> {
    if x.batch < 2 {
        bail!(InvalidInput, "batchnorm needs a batch of at least 2 in training mode");
    }
    let c = x.channels;
    let (mean, var) = channel_moments(x);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / sqrt(v + eps)).collect();
    let mut xhat = x.clone();
    let mut y = Tensor::zeros(x.batch, x.length, c);
    for (hrow, yrow) in xhat.data.chunks_exact_mut(c).zip(y.data.chunks_exact_mut(c)) {
        for k in 0..c {
            hrow[k] = (hrow[k] - mean[k]) * inv_std[k];
            yrow[k] = gamma[k] * hrow[k] + beta[k];
        }
    }
    Ok((y, BnCache { xhat, inv_std }, mean, var))
}

pub fn batchnorm_forward_eval(x: &Tensor, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Tensor {
    let c = x.channels;
    let scale: Vec<f64> = (0..c).map(|k| gamma[k] / sqrt(var[k] + eps)).collect();
    let mut y = x.clone();
    for row in y.data.chunks_exact_mut(c) {
        for k in 0..c {
            row[k] = (row[k] - mean[k]) * scale[k] + beta[k];
        }
    }
    y
}

pub fn batchnorm_backward(cache: &BnCache, gamma: &[f64], dy: &Tensor, dgamma: &mut [f64], dbeta: &mut [f64]) -> Tensor {
    let c = dy.channels;
    let count = (dy.batch * dy.length) as f64;
    let mut sum_dy = alloc::vec![0.0; c];
    let mut sum_dy_xhat = alloc::vec![0.0; c];
    for (grow, hrow) in dy.data.chunks_exact(c).zip(cache.xhat.data.chunks_exact(c)) {
        for k in 0..c {
            sum_dy[k] += grow[k];
            sum_dy_xhat[k] += grow[k] * hrow[k];
        }
    }
    for k in 0..c {
        dgamma[k] += sum_dy_xhat[k];
        dbeta[k] += sum_dy[k];
    }
    let mut dx = dy.clone();
    for (drow, hrow) in dx.data.chunks_exact_mut(c).zip(cache.xhat.data.chunks_exact(c)) {
        for k in 0..c {
            let g = gamma[k] * cache.inv_std[k];
            drow[k] = g * (drow[k] - sum_dy[k] / count - hrow[k] * sum_dy_xhat[k] / count);
        }
    }
    dx
}

/// In-place ReLU; returns the mask of positive inputs.
pub fn relu_forward(x: &mut Tensor) -> Vec<bool> {
    x.data
        .iter_mut()
        .map(|v| {
            let keep = *v > 0.0;
            if !keep {
                *v = 0.0;
            }
            keep
        })
        .collect()
}

pub fn relu_backward(mask: &[bool], dy: &mut Tensor) {
    for (g, &keep) in dy.data.iter_mut().zip(mask) {
        if !keep {
            *g = 0.0;
        }
    }
}

/// Width-2 stride-2 max pooling (odd trailing element dropped). The
/// returned choices record which element of each window won (0 or 1).
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<u8>)> {
    if x.length < 2 {
        bail!(InvalidInput, "max pooling needs length >= 2, got {}", x.length);
    }
    let (c, half) = (x.channels, x.length / 2);
    let mut y = Tensor::zeros(x.batch, half, c);
    let mut choice = alloc::vec![0u8; y.data.len()];
    for b in 0..x.batch {
        let xb = x.sample(b);
        let base = b * half * c;
        for t in 0..half {
            for k in 0..c {
                let (a, bb) = (xb[2 * t * c + k], xb[(2 * t + 1) * c + k]);
                let idx = base + t * c + k;
                if bb > a {
                    y.data[idx] = bb;
                    choice[idx] = 1;
                } else {
                    y.data[idx] = a;
                }
            }
        }
    }
    Ok((y, choice))
}

pub fn maxpool_backward(choice: &[u8], input_length: usize, dy: &Tensor) -> Tensor {
    let (c, half) = (dy.channels, dy.length);
    let mut dx = Tensor::zeros(dy.batch, input_length, c);
    for b in 0..dy.batch {
        for t in 0..half {
            for k in 0..c {
                let idx = (b * half + t) * c + k;
                let src = 2 * t + choice[idx] as usize;
                dx.data[(b * input_length + src) * c + k] = dy.data[idx];
            }
        }
    }
    dx
}

/// `(B, L, C) → (B, 1, C)` mean over length.
pub fn global_pool_forward(x: &Tensor) -> Tensor {
    let c = x.channels;
    let mut y = Tensor::zeros(x.batch, 1, c);
    let inv = 1.0 / x.length as f64;
    for b in 0..x.batch {
        let yb = &mut y.data[b * c..(b + 1) * c];
        for row in x.sample(b).chunks_exact(c) {
            for (s, v) in yb.iter_mut().zip(row) {
                *s += v;
            }
        }
        yb.iter_mut().for_each(|s| *s *= inv);
    }
    y
}

pub fn global_pool_backward(input_length: usize, dy: &Tensor) -> Tensor {
    let c = dy.channels;
    let mut dx = Tensor::zeros(dy.batch, input_length, c);
    let inv = 1.0 / input_length as f64;
    for b in 0..dy.batch {
        let g = &dy.data[b * c..(b + 1) * c];
        for row in dx.sample_mut(b).chunks_exact_mut(c) {
            for (d, v) in row.iter_mut().zip(g) {
                *d = v * inv;
            }
        }
    }
    dx
}

/// Saved state of a squeeze-and-excitation pass.
#[derive(Clone, Debug)]
pub struct SeCache {
    pub u: Tensor,
    pub z: Vec<f64>,
    pub hidden: Vec<f64>,
    pub s: Vec<f64>,
}

/// `out_c = s_c · u_c` with `s = σ(W₂ ReLU(W₁ z + b₁) + b₂)`, `z` the
/// per-channel mean. `W₁` is `h × C`, `W₂` is `C × h`, both row-major.
pub fn se_forward(u: Tensor, w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64]) -> Result<(Tensor, SeCache)> {
    let (bsz, c) = (u.batch, u.channels);
    let h = b1.len();
    if w1.len() != h * c || w2.len() != c * h || b2.len() != c {
        bail!(InvalidInput, "SE parameters do not match {c} channels");
    }
    let z = global_pool_forward(&u).data;
    let mut hidden = alloc::vec![0.0; bsz * h];
    for hrow in hidden.chunks_exact_mut(h) {
        hrow.copy_from_slice(b1);
    }
    gemm(
        1.0,
        View::row_major(&z, bsz, c),
        View::row_major(w1, h, c).t(),
        1.0,
        ViewMut::row_major(&mut hidden, bsz, h),
    );
    hidden.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut s = alloc::vec![0.0; bsz * c];
    for srow in s.chunks_exact_mut(c) {
        srow.copy_from_slice(b2);
    }
    gemm(
        1.0,
        View::row_major(&hidden, bsz, h),
        View::row_major(w2, c, h).t(),
        1.0,
        ViewMut::row_major(&mut s, bsz, c),
    );
    s.iter_mut().for_each(|v| *v = sigmoid(*v));
    let mut out = u.clone();
    for b in 0..bsz {
        let sb = &s[b * c..(b + 1) * c];
        for row in out.sample_mut(b).chunks_exact_mut(c) {
            for (v, g) in row.iter_mut().zip(sb) {
                *v *= g;
            }
        }
    }
    Ok((out, SeCache { u, z, hidden, s }))
}

#[allow(clippy::too_many_arguments)]
pub fn se_backward(
    cache: &SeCache,
    w1: &[f64],
    w2: &[f64],
    dy: &Tensor,
    dw1: &mut [f64],
    db1: &mut [f64],
    dw2: &mut [f64],
    db2: &mut [f64],
) -> Tensor {
    let u = &cache.u;
    let (bsz, c, l) = (u.batch, u.channels, u.length);
    let h = db1.len();
    // trunk: du = s·dy; gate: ds_c = Σ_t dy·u
    let mut du = dy.clone();
    let mut ds = alloc::vec![0.0; bsz * c];
    for b in 0..bsz {
        let sb = &cache.s[b * c..(b + 1) * c];
        let dsb = &mut ds[b * c..(b + 1) * c];
        for (drow, urow) in du.sample_mut(b).chunks_exact_mut(c).zip(u.sample(b).chunks_exact(c)) {
            for k in 0..c {
                dsb[k] += drow[k] * urow[k];
                drow[k] *= sb[k];
            }
        }
    }
    // through the sigmoid
    let dpre2: Vec<f64> = ds.iter().zip(&cache.s).map(|(g, s)| g * s * (1.0 - s)).collect();
    gemm(
        1.0,
        View::row_major(&dpre2, bsz, c).t(),
        View::row_major(&cache.hidden, bsz, h),
        1.0,
        ViewMut::row_major(dw2, c, h),
    );
    for row in dpre2.chunks_exact(c) {
        for (g, v) in db2.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut dhidden = alloc::vec![0.0; bsz * h];
    gemm(
        1.0,
        View::row_major(&dpre2, bsz, c),
        View::row_major(w2, c, h),
        0.0,
        ViewMut::row_major(&mut dhidden, bsz, h),
    );
    for (g, hv) in dhidden.iter_mut().zip(&cache.hidden) {
        if *hv <= 0.0 {
            *g = 0.0;
        }
    }
    gemm(
        1.0,
        View::row_major(&dhidden, bsz, h).t(),
        View::row_major(&cache.z, bsz, c),
        1.0,
        ViewMut::row_major(dw1, h, c),
    );
    for row in dhidden.chunks_exact(h) {
        for (g, v) in db1.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut dz = alloc::vec![0.0; bsz * c];
    gemm(
        1.0,
        View::row_major(&dhidden, bsz, h),
        View::row_major(w1, h, c),
        0.0,
        ViewMut::row_major(&mut dz, bsz, c),
    );
    let inv = 1.0 / l as f64;
    for b in 0..bsz {
        let dzb = &dz[b * c..(b + 1) * c];
        for row in du.sample_mut(b).chunks_exact_mut(c) {
            for (d, g) in row.iter_mut().zip(dzb) {
                *d += g * inv;
            }
        }
    }
    du
}

/// `y = x Wᵀ + b` on flattened samples; `W` is `out × F` row-major.
pub fn dense_forward(x: &Tensor, w: &[f64], bias: &[f64]) -> Result<Tensor> {
    let f = x.sample_len();
    let out = bias.len();
    if w.len() != out * f {
        bail!(InvalidInput, "dense weights of length {} for {f} -> {out}", w.len());
    }
    let mut y = Tensor::zeros(x.batch, 1, out);
    for row in y.data.chunks_exact_mut(out) {
        row.copy_from_slice(bias);
    }
    gemm(
        1.0,
        View::row_major(&x.data, x.batch, f),
        View::row_major(w, out, f).t(),
        1.0,
        ViewMut::row_major(&mut y.data, x.batch, out),
    );
    Ok(y)
}

pub fn dense_backward(x: &Tensor, w: &[f64], dy: &Tensor, dw: &mut [f64], dbias: &mut [f64]) -> Tensor {
    let f = x.sample_len();
    let out = dbias.len();
    gemm(
        1.0,
        View::row_major(&dy.data, dy.batch, out).t(),
        View::row_major(&x.data, x.batch, f),
        1.0,
        ViewMut::row_major(dw, out, f),
    );
    for row in dy.data.chunks_exact(out) {
        for (g, v) in dbias.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut dx = Tensor::zeros(x.batch, x.length, x.channels);
    gemm(
        1.0,
        View::row_major(&dy.data, dy.batch, out),
        View::row_major(w, out, f),
        0.0,
        ViewMut::row_major(&mut dx.data, x.batch, f),
    );
    dx
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut p = logits.to_vec();
    for row in p.chunks_exact_mut(classes) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = exp(*v - m);
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    p
}

/// Mean cross-entropy over the batch, the probabilities, and the gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if logits.len() != labels.len() * classes || labels.iter().any(|&y| y >= classes) {
        bail!(InvalidInput, "logits and labels disagree");
    }
    let p = softmax(logits, classes);
    let bsz = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = p.clone();
    for (b, &y) in labels.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + ln(row.iter().map(|v| exp(v - m)).sum());
        loss += lse - row[y];
        grad[b * classes + y] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g /= bsz);
    Ok((loss / bsz, p, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn t1(values: &[f64]) -> Tensor {
        Tensor::from_vec(1, values.len(), 1, values.to_vec()).unwrap()
    }

    fn random(batch: usize, length: usize, channels: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let data = (0..batch * length * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(batch, length, channels, data).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// `max |a − n| / max(|a|, |n|)` over a whole gradient tensor.
    fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        let scale = analytic
            .iter()
            .chain(numeric)
            .fold(1e-8f64, |m, v| m.max(v.abs()));
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// Central differences of `f` with respect to every entry of `v`.
    fn numeric_grad(v: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut w = v.to_vec();
        (0..v.len())
            .map(|i| {
                w[i] = v[i] + h;
                let up = f(&w);
                w[i] = v[i] - h;
                let down = f(&w);
                w[i] = v[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_examples() {
        let x = t1(&[1.0, 2.0, 3.0]);
        assert_eq!(conv1d_forward(&x, &[1.0, 1.0], &[0.0], 2, 1).unwrap().data, [1.0, 3.0, 5.0]);
        assert_eq!(conv1d_forward(&x, &[0.0, 1.0], &[0.0], 2, 1).unwrap().data, [1.0, 2.0, 3.0]);
        assert_eq!(conv1d_forward(&x, &[1.0, 0.0], &[0.0], 2, 1).unwrap().data, [0.0, 1.0, 2.0]);
        assert!(conv1d_forward(&x, &[1.0], &[0.0], 2, 1).is_err());
    }

    #[test]
    fn conv_matches_direct_sum() {
        let (k, cin, cout) = (3, 2, 4);
        let x = random(2, 7, cin, 1);
        let w = random_vec(k * cin * cout, 2);
        let b = random_vec(cout, 3);
        let y = conv1d_forward(&x, &w, &b, k, cout).unwrap();
        for bi in 0..2 {
            for t in 0..7 {
                for co in 0..cout {
                    let mut s = b[co];
                    for j in 0..k {
                        let src = t as isize - (k - 1) as isize + j as isize;
                        if src < 0 {
                            continue;
                        }
                        for ci in 0..cin {
                            s += w[(j * cin + ci) * cout + co] * x.data[(bi * 7 + src as usize) * cin + ci];
                        }
                    }
                    assert!((y.data[(bi * 7 + t) * cout + co] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let (k, cin, cout) = (2, 3, 4);
        let x = random(2, 5, cin, 4);
        let w = random_vec(k * cin * cout, 5);
        let b = random_vec(cout, 6);
        let r = random_vec(2 * 5 * cout, 7);
        let dy = Tensor::from_vec(2, 5, cout, r.clone()).unwrap();
        let (mut dw, mut db) = (alloc::vec![0.0; w.len()], alloc::vec![0.0; cout]);
        let dx = conv1d_backward(&x, &w, k, cout, &dy, &mut dw, &mut db);
        let nx = numeric_grad(&x.data, |v| {
            let xx = Tensor::from_vec(2, 5, cin, v.to_vec()).unwrap();
            dot(&conv1d_forward(&xx, &w, &b, k, cout).unwrap().data, &r)
        });
        let nw = numeric_grad(&w, |v| dot(&conv1d_forward(&x, v, &b, k, cout).unwrap().data, &r));
        let nb = numeric_grad(&b, |v| dot(&conv1d_forward(&x, &w, v, k, cout).unwrap().data, &r));
        assert!(rel_err(&dx.data, &nx) < 1e-4);
        assert!(rel_err(&dw, &nw) < 1e-4);
        assert!(rel_err(&db, &nb) < 1e-4);
    }

    #[test]
    fn batchnorm_examples() {
        let c = Tensor::from_vec(2, 2, 1, alloc::vec![3.0; 4]).unwrap();
        let (y, ..) = batchnorm_forward_train(&c, &[1.0], &[0.0], 1e-5).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));

        let x = Tensor::from_vec(2, 1, 1, alloc::vec![-1.0, 1.0]).unwrap();
        let (y, ..) = batchnorm_forward_train(&x, &[1.0], &[0.0], 1e-5).unwrap();
        let e = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data[0] + e).abs() < 1e-15 && (y.data[1] - e).abs() < 1e-15);

        let x = random(3, 4, 2, 8);
        let (y, ..) = batchnorm_forward_train(&x, &[0.0, 0.0], &[0.5, -2.0], 1e-5).unwrap();
        for row in y.data.chunks(2) {
            assert_eq!(row, [0.5, -2.0]);
        }
        assert!(batchnorm_forward_train(&random(1, 4, 2, 9), &[1.0; 2], &[0.0; 2], 1e-5).is_err());
    }

    #[test]
    fn batchnorm_gradients() {
        let (b, l, c) = (3, 4, 2);
        let x = random(b, l, c, 10);
        let gamma = random_vec(c, 11);
        let beta = random_vec(c, 12);
        let r = random_vec(b * l * c, 13);
        let f = |x: &Tensor, g: &[f64], be: &[f64]| dot(&batchnorm_forward_train(x, g, be, 1e-5).unwrap().0.data, &r);
        let (_, cache, ..) = batchnorm_forward_train(&x, &gamma, &beta, 1e-5).unwrap();
        let (mut dg, mut dbeta) = (alloc::vec![0.0; c], alloc::vec![0.0; c]);
        let dx = batchnorm_backward(&cache, &gamma, &Tensor::from_vec(b, l, c, r.clone()).unwrap(), &mut dg, &mut dbeta);
        let nx = numeric_grad(&x.data, |v| f(&Tensor::from_vec(b, l, c, v.to_vec()).unwrap(), &gamma, &beta));
        assert!(rel_err(&dx.data, &nx) < 1e-4);
        assert!(rel_err(&dg, &numeric_grad(&gamma, |v| f(&x, v, &beta))) < 1e-4);
        assert!(rel_err(&dbeta, &numeric_grad(&beta, |v| f(&x, &gamma, v))) < 1e-4);
    }

    #[test]
    fn eval_batchnorm_uses_given_statistics() {
        let x = t1(&[2.0, 4.0]);
        let y = batchnorm_forward_eval(&x, &[2.0], &[1.0], &[1.0], &[4.0], 0.0);
        assert_eq!(y.data, [2.0, 4.0]);
    }

    #[test]
    fn relu_examples() {
        let mut x = t1(&[-1.0, 0.0, 2.0]);
        let mask = relu_forward(&mut x);
        assert_eq!(x.data, [0.0, 0.0, 2.0]);
        let again = x.clone();
        relu_forward(&mut x);
        assert_eq!(x, again);
        let mut neg = t1(&[-3.0, -0.1]);
        relu_forward(&mut neg);
        assert!(neg.data.iter().all(|&v| v == 0.0));
        let mut dy = t1(&[5.0, 5.0, 5.0]);
        relu_backward(&mask, &mut dy);
        assert_eq!(dy.data, [0.0, 0.0, 5.0]);
    }

    #[test]
    fn maxpool_examples() {
        assert_eq!(maxpool_forward(&t1(&[1.0, 3.0, 2.0, 5.0])).unwrap().0.data, [3.0, 5.0]);
        assert_eq!(maxpool_forward(&t1(&[1.0, 3.0, 2.0])).unwrap().0.data, [3.0]);
        assert_eq!(maxpool_forward(&t1(&[-2.0, -1.0])).unwrap().0.data, [-1.0]);
        assert!(maxpool_forward(&t1(&[1.0])).is_err());
    }

    #[test]
    fn maxpool_gradients() {
        let x = random(2, 7, 3, 14);
        let (y, choice) = maxpool_forward(&x).unwrap();
        let r = random_vec(y.data.len(), 15);
        let dx = maxpool_backward(&choice, 7, &Tensor::from_vec(2, 3, 3, r.clone()).unwrap());
        let nx = numeric_grad(&x.data, |v| {
            dot(&maxpool_forward(&Tensor::from_vec(2, 7, 3, v.to_vec()).unwrap()).unwrap().0.data, &r)
        });
        assert!(rel_err(&dx.data, &nx) < 1e-4);
        // the dropped trailing row gets no gradient
        assert!(dx.sample(0)[18..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_pool_examples_and_gradient() {
        assert_eq!(global_pool_forward(&t1(&[1.0, 2.0, 3.0])).data, [2.0]);
        assert_eq!(global_pool_forward(&Tensor::from_vec(1, 3, 1, alloc::vec![4.5; 3]).unwrap()).data, [4.5]);
        assert_eq!(global_pool_forward(&Tensor::zeros(2, 4, 3)).data, [0.0; 6]);
        let x = random(2, 5, 3, 16);
        let r = random_vec(6, 17);
        let dx = global_pool_backward(5, &Tensor::from_vec(2, 1, 3, r.clone()).unwrap());
        let nx = numeric_grad(&x.data, |v| dot(&global_pool_forward(&Tensor::from_vec(2, 5, 3, v.to_vec()).unwrap()).data, &r));
        assert!(rel_err(&dx.data, &nx) < 1e-4);
    }

    #[test]
    fn se_examples() {
        let (c, h) = (8, 2);
        let u = random(2, 5, c, 18);
        let zero_w1 = alloc::vec![0.0; h * c];
        let zero_w2 = alloc::vec![0.0; c * h];
        let (y, _) = se_forward(u.clone(), &zero_w1, &[0.0; 2], &zero_w2, &[0.0; 8]).unwrap();
        assert!(y.same_shape(&u));
        for (a, b) in y.data.iter().zip(&u.data) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
        // saturated gate
        let (y, _) = se_forward(u.clone(), &zero_w1, &[0.0; 2], &zero_w2, &[60.0; 8]).unwrap();
        for (a, b) in y.data.iter().zip(&u.data) {
            assert!((a - b).abs() < 1e-20 + 1e-15 * b.abs());
        }
        let w1 = random_vec(h * c, 19);
        let w2 = random_vec(c * h, 20);
        let (y, _) = se_forward(Tensor::zeros(1, 4, c), &w1, &[0.1, 0.2], &w2, &[0.3; 8]).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
        assert!(se_forward(u, &w1, &[0.0; 3], &w2, &[0.0; 8]).is_err());
    }

    #[test]
    fn se_gradients_through_gate_and_trunk() {
        let (b, l, c, h) = (2, 5, 8, 2);
        let u = random(b, l, c, 21);
        let (w1, b1, w2, b2) = (random_vec(h * c, 22), random_vec(h, 23), random_vec(c * h, 24), random_vec(c, 25));
        let r = random_vec(b * l * c, 26);
        let f = |u: &Tensor, w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64]| {
            dot(&se_forward(u.clone(), w1, b1, w2, b2).unwrap().0.data, &r)
        };
        let (_, cache) = se_forward(u.clone(), &w1, &b1, &w2, &b2).unwrap();
        let mut g = [alloc::vec![0.0; h * c], alloc::vec![0.0; h], alloc::vec![0.0; c * h], alloc::vec![0.0; c]];
        let [g1, gb1, g2, gb2] = &mut g;
        let dy = Tensor::from_vec(b, l, c, r.clone()).unwrap();
        let du = se_backward(&cache, &w1, &w2, &dy, g1, gb1, g2, gb2);
        let nu = numeric_grad(&u.data, |v| f(&Tensor::from_vec(b, l, c, v.to_vec()).unwrap(), &w1, &b1, &w2, &b2));
        assert!(rel_err(&du.data, &nu) < 1e-4);
        assert!(rel_err(g1, &numeric_grad(&w1, |v| f(&u, v, &b1, &w2, &b2))) < 1e-4);
        assert!(rel_err(gb1, &numeric_grad(&b1, |v| f(&u, &w1, v, &w2, &b2))) < 1e-4);
        assert!(rel_err(g2, &numeric_grad(&w2, |v| f(&u, &w1, &b1, v, &b2))) < 1e-4);
        assert!(rel_err(gb2, &numeric_grad(&b2, |v| f(&u, &w1, &b1, &w2, v))) < 1e-4);
    }

    #[test]
    fn saturated_se_passes_the_trunk_gradient_through() {
        // s ≡ 1: the gate path is flat (σ' = 0), so du = dy exactly
        let (c, h) = (4, 1);
        let u = random(1, 3, c, 27);
        let w1 = random_vec(h * c, 28);
        let (_, cache) = se_forward(u, &w1, &[0.0], &[0.0; 4], &[800.0; 4]).unwrap();
        let dy = random(1, 3, c, 29);
        let mut g = [alloc::vec![0.0; h * c], alloc::vec![0.0; h], alloc::vec![0.0; c * h], alloc::vec![0.0; c]];
        let [g1, gb1, g2, gb2] = &mut g;
        let du = se_backward(&cache, &w1, &[0.0; 4], &dy, g1, gb1, g2, gb2);
        assert_eq!(du.data, dy.data);
        assert!(g2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_examples_and_gradients() {
        let x = Tensor::from_vec(1, 1, 3, alloc::vec![0.5, -1.0, 2.0]).unwrap();
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(dense_forward(&x, &eye, &[0.0; 3]).unwrap().data, x.data);
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let e1 = Tensor::from_vec(1, 1, 3, alloc::vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(dense_forward(&e1, &w, &[0.5, -0.5]).unwrap().data, [1.5, 3.5]);
        assert_eq!(dense_forward(&x, &[0.0; 6], &[7.0, 8.0]).unwrap().data, [7.0, 8.0]);
        assert!(dense_forward(&x, &[0.0; 5], &[7.0, 8.0]).is_err());

        let x = random(3, 2, 4, 30);
        let w = random_vec(5 * 8, 31);
        let b = random_vec(5, 32);
        let r = random_vec(15, 33);
        let (mut dw, mut db) = (alloc::vec![0.0; 40], alloc::vec![0.0; 5]);
        let dx = dense_backward(&x, &w, &Tensor::from_vec(3, 1, 5, r.clone()).unwrap(), &mut dw, &mut db);
        let nx = numeric_grad(&x.data, |v| dot(&dense_forward(&Tensor::from_vec(3, 2, 4, v.to_vec()).unwrap(), &w, &b).unwrap().data, &r));
        assert!(rel_err(&dx.data, &nx) < 1e-4);
        assert!(rel_err(&dw, &numeric_grad(&w, |v| dot(&dense_forward(&x, v, &b).unwrap().data, &r))) < 1e-4);
        assert!(rel_err(&db, &numeric_grad(&b, |v| dot(&dense_forward(&x, &w, v).unwrap().data, &r))) < 1e-4);
    }

    #[test]
    fn softmax_examples() {
        let (loss, p, _) = softmax_cross_entropy(&[0.0, 0.0], &[1], 2).unwrap();
        assert_eq!(p, [0.5, 0.5]);
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
        let p = softmax(&[core::f64::consts::LN_2, 0.0], 2);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let shifted = softmax(&[core::f64::consts::LN_2 + 700.0, 700.0], 2);
        assert!((shifted[0] - p[0]).abs() < 1e-12);
        assert!(softmax_cross_entropy(&[0.0, 0.0], &[2], 2).is_err());
    }

    #[test]
    fn cross_entropy_gradient() {
        let logits = random_vec(8, 34);
        let labels = [0, 1, 1, 0];
        let (_, _, g) = softmax_cross_entropy(&logits, &labels, 2).unwrap();
        let n = numeric_grad(&logits, |v| softmax_cross_entropy(v, &labels, 2).unwrap().0);
        assert!(rel_err(&g, &n) < 1e-4);
    }

    proptest::proptest! {
        #[test]
        // logit spreads above ~36 round the top probability to exactly 1.0
        fn softmax_is_a_distribution(v in proptest::collection::vec(-15.0f64..15.0, 2..=6)) {
            let p = softmax(&v, v.len());
            proptest::prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn se_preserves_shape(l in 1usize..6, h in 1usize..4, r in 1usize..5, seed in proptest::prelude::any::<u64>()) {
            let c = h * r;
            let u = random(2, l, c, seed);
            let (y, _) = se_forward(u.clone(), &random_vec(h * c, seed ^ 1), &alloc::vec![0.0; h], &random_vec(c * h, seed ^ 2), &alloc::vec![0.0; c]).unwrap();
            proptest::prop_assert!(y.same_shape(&u));
        }
    }
}
