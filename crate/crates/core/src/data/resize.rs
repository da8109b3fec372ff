//! Bilinear resizing with half-pixel sample centres and edge clamping.

use crate::error::Result;
use crate::math;
use crate::tensor::Tensor;

/// Resizes an `[H, W]` image to `[out_h, out_w]`.
pub fn resize_bilinear(src: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    src.expect_rank(2, "resize input")?;
    let (h, w) = (src.shape()[0], src.shape()[1]);
    if (h, w) == (out_h, out_w) {
        return Ok(src.clone());
    }
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    let data = src.data();
    let mut out = Tensor::zeros(&[out_h, out_w]);
    let od = out.data_mut();
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = math::floor(sy) as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = math::floor(sx) as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = sx - x0 as f64;
            let top = (1.0 - wx) * data[y0 * w + x0] + wx * data[y0 * w + x1];
            let bottom = (1.0 - wx) * data[y1 * w + x0] + wx * data[y1 * w + x1];
            od[oy * out_w + ox] = (1.0 - wy) * top + wy * bottom;
        }
    }
    Ok(out)
}
