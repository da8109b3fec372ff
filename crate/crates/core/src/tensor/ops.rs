//! Layer primitives other than convolution: forward functions and their
//! backward rules. Each forward is a pure function; backwards take the saved
//! forward context they need and return fresh gradient tensors.

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Probabilities are clamped to `[PROB_CLAMP_MIN, 1]` inside the
/// cross-entropy so a zero probability cannot produce an infinite loss.
pub const PROB_CLAMP_MIN: f64 = 1e-12;

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_fn(x.shape(), |i| x.data()[i].max(0.0))
}

pub(crate) fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor::from_fn(x.shape(), |i| {
        if x.data()[i] > 0.0 {
            grad_out.data()[i]
        } else {
            0.0
        }
    })
}

/// Elementwise sum of two same-shape tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "add operands {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Tensor::from_fn(a.shape(), |i| a.data()[i] + b.data()[i]))
}

/// Elementwise product of two same-shape tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mul operands {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Tensor::from_fn(a.shape(), |i| a.data()[i] * b.data()[i]))
}

/// Concatenates NCHW tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::ShapeMismatch("concat of zero tensors".into()));
    }
    for t in parts {
        t.expect_rank(4, "concat_channels input")?;
    }
    let (n, h, w) = (parts[0].shape()[0], parts[0].shape()[2], parts[0].shape()[3]);
    for (idx, t) in parts.iter().enumerate() {
        if t.shape()[0] != n || t.shape()[2] != h || t.shape()[3] != w {
            return Err(Error::ShapeMismatch(format!(
                "concat input {idx} has shape {:?}, expected [{n}, _, {h}, {w}]",
                t.shape()
            )));
        }
    }
    let c_total: usize = parts.iter().map(|t| t.shape()[1]).sum();
    let hw = h * w;
    let mut out = vec![0.0; n * c_total * hw];
    for i in 0..n {
        let mut co = 0;
        for t in parts {
            let c = t.shape()[1];
            let src = &t.data()[i * c * hw..(i + 1) * c * hw];
            out[(i * c_total + co) * hw..(i * c_total + co + c) * hw].copy_from_slice(src);
            co += c;
        }
    }
    Tensor::new(vec![n, c_total, h, w], out)
}

/// Splits a channel-concat gradient back into per-part gradients.
pub(crate) fn concat_channels_backward(parts: &[&Tensor], grad_out: &Tensor) -> Vec<Tensor> {
    let (n, h, w) = (parts[0].shape()[0], parts[0].shape()[2], parts[0].shape()[3]);
    let c_total: usize = parts.iter().map(|t| t.shape()[1]).sum();
    let hw = h * w;
    let gy = grad_out.data();
    let mut grads = Vec::with_capacity(parts.len());
    let mut co = 0;
    for t in parts {
        let c = t.shape()[1];
        let mut g = vec![0.0; n * c * hw];
        for i in 0..n {
            g[i * c * hw..(i + 1) * c * hw]
                .copy_from_slice(&gy[(i * c_total + co) * hw..(i * c_total + co + c) * hw]);
        }
        grads.push(Tensor::new(vec![n, c, h, w], g).expect("split shape"));
        co += c;
    }
    grads
}

/// Max pooling over square windows, no padding. Returns the pooled tensor
/// and the flat input index of each maximum (first occurrence wins ties).
pub fn max_pool(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    x.expect_rank(4, "max_pool input")?;
    if window == 0 || stride == 0 {
        return Err(Error::InvalidSpec("max_pool window/stride must be positive".into()));
    }
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if h < window || w < window {
        return Err(Error::ShapeMismatch(format!(
            "max_pool window {window} exceeds input {h}x{w}"
        )));
    }
    let ho = (h - window) / stride + 1;
    let wo = (w - window) / stride + 1;
    let xd = x.data();
    let mut out = vec![0.0; n * c * ho * wo];
    let mut argmax = vec![0usize; n * c * ho * wo];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ky in 0..window {
                        for kx in 0..window {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((i * c + ch) * ho + oy) * wo + ox;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, argmax))
}

pub(crate) fn max_pool_backward(x: &Tensor, argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut gx = vec![0.0; x.numel()];
    for (g, &src) in grad_out.data().iter().zip(argmax) {
        gx[src] += *g;
    }
    Tensor::new(x.shape().to_vec(), gx).expect("same shape")
}

/// Global average pooling: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(4, "global_avg_pool input")?;
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let hw = h * w;
    let xd = x.data();
    let mut out = vec![0.0; n * c];
    for (i, o) in out.iter_mut().enumerate() {
        let src = &xd[i * hw..(i + 1) * hw];
        let mut s = 0.0;
        for v in src {
            s += *v;
        }
        *o = s / hw as f64;
    }
    Tensor::new(vec![n, c], out)
}

pub(crate) fn global_avg_pool_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let [_, _, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let hw = h * w;
    let gy = grad_out.data();
    let mut gx = vec![0.0; x.numel()];
    for (i, chunk) in gx.chunks_mut(hw).enumerate() {
        let g = gy[i] / hw as f64;
        chunk.fill(g);
    }
    Tensor::new(x.shape().to_vec(), gx).expect("same shape")
}

/// Fully connected layer: `y = x . W^T + b` with `x: [N, F]`, `W: [O, F]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    x.expect_rank(2, "dense input")?;
    weight.expect_rank(2, "dense weight")?;
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let (o, fw) = (weight.shape()[0], weight.shape()[1]);
    if f != fw {
        return Err(Error::ShapeMismatch(format!(
            "dense input features {f} vs weight features {fw}"
        )));
    }
    if bias.shape() != [o] {
        return Err(Error::ShapeMismatch(format!(
            "dense bias shape {:?}, expected [{o}]",
            bias.shape()
        )));
    }
    let (xd, wd, bd) = (x.data(), weight.data(), bias.data());
    let mut out = vec![0.0; n * o];
    for i in 0..n {
        let xrow = &xd[i * f..(i + 1) * f];
        let orow = &mut out[i * o..(i + 1) * o];
        for (j, ov) in orow.iter_mut().enumerate() {
            let wrow = &wd[j * f..(j + 1) * f];
            let mut s = bd[j];
            for (xv, wv) in xrow.iter().zip(wrow) {
                s += xv * wv;
            }
            *ov = s;
        }
    }
    Tensor::new(vec![n, o], out)
}

pub(crate) fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let o = weight.shape()[0];
    let (xd, wd, gy) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0; n * f];
    let mut gw = vec![0.0; o * f];
    let mut gb = vec![0.0; o];
    for i in 0..n {
        let xrow = &xd[i * f..(i + 1) * f];
        let grow = &gy[i * o..(i + 1) * o];
        let gxrow = &mut gx[i * f..(i + 1) * f];
        for (j, &g) in grow.iter().enumerate() {
            gb[j] += g;
            let wrow = &wd[j * f..(j + 1) * f];
            let gwrow = &mut gw[j * f..(j + 1) * f];
            for k in 0..f {
                gxrow[k] += g * wrow[k];
                gwrow[k] += g * xrow[k];
            }
        }
    }
    (
        Tensor::new(vec![n, f], gx).expect("shape"),
        Tensor::new(vec![o, f], gw).expect("shape"),
        Tensor::new(vec![o], gb).expect("shape"),
    )
}

/// Softmax along `axis`, shift-normalised for stability.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.shape().len() {
        return Err(Error::ShapeMismatch(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let axis_len = x.shape()[axis];
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    for ou in 0..outer {
        for inn in 0..inner {
            let at = |j: usize| (ou * axis_len + j) * inner + inn;
            let mut max = f64::NEG_INFINITY;
            for j in 0..axis_len {
                max = max.max(xd[at(j)]);
            }
            let mut denom = 0.0;
            for j in 0..axis_len {
                let e = math::exp(xd[at(j)] - max);
                out[at(j)] = e;
                denom += e;
            }
            for j in 0..axis_len {
                out[at(j)] /= denom;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Backward of softmax given its own output `y`.
pub(crate) fn softmax_backward(y: &Tensor, axis: usize, grad_out: &Tensor) -> Tensor {
    let axis_len = y.shape()[axis];
    let inner: usize = y.shape()[axis + 1..].iter().product();
    let outer: usize = y.shape()[..axis].iter().product();
    let (yd, gy) = (y.data(), grad_out.data());
    let mut gx = vec![0.0; yd.len()];
    for ou in 0..outer {
        for inn in 0..inner {
            let at = |j: usize| (ou * axis_len + j) * inner + inn;
            let mut dot = 0.0;
            for j in 0..axis_len {
                dot += gy[at(j)] * yd[at(j)];
            }
            for j in 0..axis_len {
                gx[at(j)] = yd[at(j)] * (gy[at(j)] - dot);
            }
        }
    }
    Tensor::new(y.shape().to_vec(), gx).expect("same shape")
}

/// Mean negative log-likelihood of `labels` under class probabilities
/// `probs: [N, K]`. Probabilities are clamped to avoid `log(0)`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    probs.expect_rank(2, "cross_entropy probs")?;
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "cross_entropy got {} labels for {n} rows",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::InvalidData(format!(
                "label {label} out of range for {k} classes (sample {i})"
            )));
        }
        let p = probs.data()[i * k + label].clamp(PROB_CLAMP_MIN, 1.0);
        loss -= math::ln(p);
    }
    Ok(Tensor::scalar(loss / n as f64))
}

/// Backward of [`cross_entropy`] w.r.t. `probs`; `grad` is the upstream
/// scalar gradient. The clamp zeroes the derivative outside its range.
pub fn cross_entropy_backward(probs: &Tensor, labels: &[usize], grad: f64) -> Tensor {
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    let mut gx = vec![0.0; n * k];
    for (i, &label) in labels.iter().enumerate() {
        let p = probs.data()[i * k + label];
        if p >= PROB_CLAMP_MIN && p < 1.0 {
            gx[i * k + label] = -grad / (n as f64 * p);
        }
    }
    Tensor::new(vec![n, k], gx).expect("shape")
}

/// Sum of all elements as a scalar tensor.
pub fn sum_all(x: &Tensor) -> Tensor {
    let mut s = 0.0;
    for v in x.data() {
        s += *v;
    }
    Tensor::scalar(s)
}
