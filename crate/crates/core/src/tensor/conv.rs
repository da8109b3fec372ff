//! 2-D convolution: spec, forward kernels and backward kernels.
//!
//! Three execution paths share one contract: a 1x1/stride-1/ungrouped
//! convolution lowers to a plain matrix product per image, a depthwise
//! convolution runs as a direct loop per channel, and the general grouped
//! case lowers through im2col. The six-nested-loop reference lives in the
//! test kit and every path is checked against it.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use alloc::format;
use alloc::vec;

/// Geometry of a 2-D convolution.
///
/// `groups == in_channels` with `out_channels == in_channels` is depthwise
/// convolution; `groups == 1` is ordinary dense convolution. `padding` is
/// applied to every side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// 1x1 stride-1 unpadded ungrouped convolution.
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }

    /// Depthwise convolution over `channels` with a square kernel.
    pub fn depthwise(channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            groups: channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.stride == 0
            || self.groups == 0
        {
            return Err(Error::InvalidSpec(format!(
                "conv spec has a zero field: {self:?}"
            )));
        }
        if self.in_channels % self.groups != 0 {
            return Err(Error::InvalidSpec(format!(
                "groups {} does not divide in_channels {}",
                self.groups, self.in_channels
            )));
        }
        if self.out_channels % self.groups != 0 {
            return Err(Error::InvalidSpec(format!(
                "groups {} does not divide out_channels {}",
                self.groups, self.out_channels
            )));
        }
        Ok(())
    }

    /// Output spatial size for an `h` x `w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let eff_h = h + 2 * self.padding;
        let eff_w = w + 2 * self.padding;
        if eff_h < self.kernel_h || eff_w < self.kernel_w {
            return Err(Error::ShapeMismatch(format!(
                "kernel {}x{} exceeds padded input {}x{}",
                self.kernel_h, self.kernel_w, eff_h, eff_w
            )));
        }
        Ok((
            (eff_h - self.kernel_h) / self.stride + 1,
            (eff_w - self.kernel_w) / self.stride + 1,
        ))
    }

    /// Expected weight tensor shape `[out, in/groups, kh, kw]`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel_h,
            self.kernel_w,
        ]
    }

    /// Parameter count, optionally including biases.
    pub fn param_count(&self, bias: bool) -> usize {
        let w = self.out_channels * (self.in_channels / self.groups) * self.kernel_h * self.kernel_w;
        w + if bias { self.out_channels } else { 0 }
    }

    /// Multiply-accumulate count for one image with the given output size.
    pub fn mac_count(&self, out_h: usize, out_w: usize) -> usize {
        self.kernel_h * self.kernel_w * (self.in_channels / self.groups)
            * self.out_channels
            * out_h
            * out_w
    }
}

// ---------------------------------------------------------------------------
// Matrix product helpers. All accumulate into `c`.
// ---------------------------------------------------------------------------

/// c[m x n] += a[m x k] . b[k x n]
pub(crate) fn mm(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * *bj;
            }
        }
    }
}

/// c[m x n] += a[m x k] . b[n x k]^T
pub(crate) fn mm_abt(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cj) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (al, bl) in arow.iter().zip(brow) {
                s += al * bl;
            }
            *cj += s;
        }
    }
}

/// c[m x n] += a[k x m]^T . b[k x n]
pub(crate) fn mm_atb(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for l in 0..k {
        let arow = &a[l * m..(l + 1) * m];
        let brow = &b[l * n..(l + 1) * n];
        for (i, &ali) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += ali * *bj;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// im2col lowering
// ---------------------------------------------------------------------------

/// Unrolls one (image, group) block `[cg, h, w]` into `cols[cg*kh*kw, ho*wo]`.
fn im2col(x: &[f64], h: usize, w: usize, cg: usize, spec: &ConvSpec, ho: usize, wo: usize, cols: &mut [f64]) {
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let howo = ho * wo;
    let mut row = 0;
    for ic in 0..cg {
        let chan = &x[ic * h * w..(ic + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut cols[row * howo..(row + 1) * howo];
                row += 1;
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let srow = &chan[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        *d = if ix >= 0 && ix < w as isize {
                            srow[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols[cg*kh*kw, ho*wo]` back into the `[cg, h, w]` block.
fn col2im_add(gx: &mut [f64], h: usize, w: usize, cg: usize, spec: &ConvSpec, ho: usize, wo: usize, cols: &[f64]) {
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let howo = ho * wo;
    let mut row = 0;
    for ic in 0..cg {
        let chan = &mut gx[ic * h * w..(ic + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let src = &cols[row * howo..(row + 1) * howo];
                row += 1;
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let crow = &mut chan[iy as usize * w..(iy as usize + 1) * w];
                    let srow = &src[oy * wo..(oy + 1) * wo];
                    for (ox, sv) in srow.iter().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            crow[ix as usize] += *sv;
                        }
                    }
                }
            }
        }
    }
}

fn check_conv_args(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<(usize, usize, usize, usize, usize)> {
    spec.validate()?;
    input.expect_rank(4, "conv2d input")?;
    let [n, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    if c != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv2d input has {c} channels but spec.in_channels is {}",
            spec.in_channels
        )));
    }
    let expected = spec.weight_shape();
    if weight.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "conv2d weight shape {:?} does not match spec {expected:?}",
            weight.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d bias shape {:?}, expected [{}]",
                b.shape(),
                spec.out_channels
            )));
        }
    }
    let (ho, wo) = spec.output_hw(h, w)?;
    Ok((n, h, w, ho, wo))
}

fn is_pointwise(spec: &ConvSpec) -> bool {
    spec.kernel_h == 1
        && spec.kernel_w == 1
        && spec.stride == 1
        && spec.padding == 0
        && spec.groups == 1
}

fn is_depthwise(spec: &ConvSpec) -> bool {
    spec.groups == spec.in_channels && spec.out_channels == spec.in_channels
}

/// Grouped 2-D convolution over an NCHW batch.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    let (n, h, w, ho, wo) = check_conv_args(input, weight, bias, spec)?;
    let (c, oc) = (spec.in_channels, spec.out_channels);
    let howo = ho * wo;
    let mut out = vec![0.0; n * oc * howo];
    let x = input.data();
    let wt = weight.data();

    if is_pointwise(spec) {
        // out[n] = W[oc x c] . x[n][c x hw]
        for i in 0..n {
            mm(
                &mut out[i * oc * howo..(i + 1) * oc * howo],
                wt,
                &x[i * c * howo..(i + 1) * c * howo],
                oc,
                c,
                howo,
            );
        }
    } else if is_depthwise(spec) {
        let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
        for i in 0..n {
            for ch in 0..c {
                let chan = &x[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
                let ker = &wt[ch * kh * kw..(ch + 1) * kh * kw];
                let dst = &mut out[(i * oc + ch) * howo..(i * oc + ch + 1) * howo];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ky in 0..kh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    acc += ker[ky * kw + kx] * chan[iy as usize * w + ix as usize];
                                }
                            }
                        }
                        dst[oy * wo + ox] = acc;
                    }
                }
            }
        }
    } else {
        let (g, cg, ocg) = (spec.groups, c / spec.groups, oc / spec.groups);
        let k = cg * spec.kernel_h * spec.kernel_w;
        let mut cols = vec![0.0; k * howo];
        for i in 0..n {
            for gi in 0..g {
                let xblk = &x[(i * c + gi * cg) * h * w..(i * c + (gi + 1) * cg) * h * w];
                im2col(xblk, h, w, cg, spec, ho, wo, &mut cols);
                mm(
                    &mut out[(i * oc + gi * ocg) * howo..(i * oc + (gi + 1) * ocg) * howo],
                    &wt[gi * ocg * k..(gi + 1) * ocg * k],
                    &cols,
                    ocg,
                    k,
                    howo,
                );
            }
        }
    }

    if let Some(b) = bias {
        let bd = b.data();
        for i in 0..n {
            for (ch, bv) in bd.iter().enumerate() {
                let dst = &mut out[(i * oc + ch) * howo..(i * oc + ch + 1) * howo];
                for v in dst {
                    *v += *bv;
                }
            }
        }
    }

    Tensor::new(vec![n, oc, ho, wo], out)
}

/// Gradients produced by [`conv2d_backward`].
pub struct Conv2dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Backward pass of [`conv2d`] given the upstream gradient.
///
/// `with_bias` selects whether a bias gradient is produced.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
    with_bias: bool,
) -> Result<Conv2dGrads> {
    let (n, h, w, ho, wo) = check_conv_args(input, weight, None, spec)?;
    let (c, oc) = (spec.in_channels, spec.out_channels);
    let howo = ho * wo;
    if grad_out.shape() != [n, oc, ho, wo] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d grad_out shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, oc, ho, wo]
        )));
    }
    let x = input.data();
    let wt = weight.data();
    let gy = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];

    if is_pointwise(spec) {
        for i in 0..n {
            let gyb = &gy[i * oc * howo..(i + 1) * oc * howo];
            let xb = &x[i * c * howo..(i + 1) * c * howo];
            // gx[n] = W^T . gy[n];  gw += gy[n] . x[n]^T
            mm_atb(&mut gx[i * c * howo..(i + 1) * c * howo], wt, gyb, c, oc, howo);
            mm_abt(&mut gw, gyb, xb, oc, howo, c);
        }
    } else if is_depthwise(spec) {
        let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
        for i in 0..n {
            for ch in 0..c {
                let chan = &x[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
                let ker = &wt[ch * kh * kw..(ch + 1) * kh * kw];
                let gyc = &gy[(i * oc + ch) * howo..(i * oc + ch + 1) * howo];
                let gxc = &mut gx[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
                let gwc = &mut gw[ch * kh * kw..(ch + 1) * kh * kw];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let g = gyc[oy * wo + ox];
                        if g == 0.0 {
                            continue;
                        }
                        for ky in 0..kh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    let src = iy as usize * w + ix as usize;
                                    gwc[ky * kw + kx] += g * chan[src];
                                    gxc[src] += g * ker[ky * kw + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        let (g, cg, ocg) = (spec.groups, c / spec.groups, oc / spec.groups);
        let k = cg * spec.kernel_h * spec.kernel_w;
        let mut cols = vec![0.0; k * howo];
        let mut gcols = vec![0.0; k * howo];
        for i in 0..n {
            for gi in 0..g {
                let xblk = &x[(i * c + gi * cg) * h * w..(i * c + (gi + 1) * cg) * h * w];
                let gyb = &gy[(i * oc + gi * ocg) * howo..(i * oc + (gi + 1) * ocg) * howo];
                let wg = &wt[gi * ocg * k..(gi + 1) * ocg * k];
                im2col(xblk, h, w, cg, spec, ho, wo, &mut cols);
                mm_abt(&mut gw[gi * ocg * k..(gi + 1) * ocg * k], gyb, &cols, ocg, howo, k);
                gcols.fill(0.0);
                mm_atb(&mut gcols, wg, gyb, k, ocg, howo);
                col2im_add(
                    &mut gx[(i * c + gi * cg) * h * w..(i * c + (gi + 1) * cg) * h * w],
                    h,
                    w,
                    cg,
                    spec,
                    ho,
                    wo,
                    &gcols,
                );
            }
        }
    }

    let bias = if with_bias {
        let mut gb = vec![0.0; oc];
        for i in 0..n {
            for (ch, gbv) in gb.iter_mut().enumerate() {
                let src = &gy[(i * oc + ch) * howo..(i * oc + ch + 1) * howo];
                for v in src {
                    *gbv += *v;
                }
            }
        }
        Some(Tensor::new(vec![oc], gb)?)
    } else {
        None
    };

    Ok(Conv2dGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_rejects_bad_groups() {
        let spec = ConvSpec {
            in_channels: 4,
            out_channels: 6,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
            groups: 3,
        };
        let err = spec.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(m) if m.contains("groups 3")));
    }

    #[test]
    fn output_geometry_matches_floor_formula() {
        let spec = ConvSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 3,
            kernel_w: 3,
            stride: 2,
            padding: 1,
            groups: 1,
        };
        assert_eq!(spec.output_hw(7, 9).unwrap(), (4, 5));
    }

    #[test]
    fn identity_pointwise_conv_is_identity() {
        let c = 3;
        let spec = ConvSpec::pointwise(c, c);
        let x = Tensor::from_fn(&[2, c, 4, 4], |i| (i as f64) * 0.17 - 3.0);
        let w = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 });
        let b = Tensor::zeros(&[c]);
        let y = conv2d(&x, &w, Some(&b), &spec).unwrap();
        assert_eq!(y.data(), x.data());
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn all_ones_depthwise_sums_neighbourhood() {
        // 3x3 depthwise, stride 1, pad 1: every output pixel is the 3x3
        // neighbourhood sum within its own channel.
        let (c, h, w) = (4, 8, 8);
        let spec = ConvSpec::depthwise(c, 3, 1, 1);
        let x = Tensor::from_fn(&[1, c, h, w], |i| ((i * 7 + 3) % 11) as f64);
        let wt = Tensor::filled(&[c, 1, 3, 3], 1.0);
        let y = conv2d(&x, &wt, None, &spec).unwrap();
        for ch in 0..c {
            for oy in 0..h {
                for ox in 0..w {
                    let mut want = 0.0;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (iy, ix) = (oy as i64 + dy, ox as i64 + dx);
                            if iy >= 0 && iy < h as i64 && ix >= 0 && ix < w as i64 {
                                want += x.data()[(ch * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    let got = y.data()[(ch * h + oy) * w + ox];
                    assert_eq!(got, want, "channel {ch} at ({oy},{ox})");
                }
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_naming_dimension() {
        let spec = ConvSpec::pointwise(4, 2);
        let x = Tensor::zeros(&[1, 3, 5, 5]);
        let w = Tensor::zeros(&[2, 4, 1, 1]);
        let err = conv2d(&x, &w, None, &spec).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(m) if m.contains("3 channels")));
    }
}
