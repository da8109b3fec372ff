//! Image augmentation: translation, rotation, horizontal flip, zoom and
//! intensity shift.
//!
//! The geometric transforms compose into a single inverse mapping, so each
//! augmented pixel is produced by one bilinear resample (zero-padded outside
//! the frame; zoom-out therefore pads and zoom-in crops). All magnitudes are
//! drawn independently within the configured bounds in a fixed order, so a
//! given random state yields exactly one augmented image.

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;
use alloc::format;
use rand::Rng;

/// Bounds for the augmentation draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    /// Max |shift| per axis, as a fraction of the image side.
    pub max_translation_frac: f64,
    pub max_rotation_deg: f64,
    pub hflip_prob: f64,
    /// `(lo, hi)` with `lo <= 1 <= hi`; factors above 1 crop (zoom in),
    /// below 1 pad (zoom out).
    pub zoom_range: (f64, f64),
    pub max_intensity_shift_frac: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            max_translation_frac: 0.10,
            max_rotation_deg: 10.0,
            hflip_prob: 0.5,
            zoom_range: (0.9, 1.1),
            max_intensity_shift_frac: 0.10,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// A configuration that leaves every image untouched.
    pub fn identity() -> Self {
        AugmentationConfig {
            max_translation_frac: 0.0,
            max_rotation_deg: 0.0,
            hflip_prob: 0.0,
            zoom_range: (1.0, 1.0),
            max_intensity_shift_frac: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_translation_frac < 0.0
            || self.max_rotation_deg < 0.0
            || self.max_intensity_shift_frac < 0.0
        {
            return Err(Error::InvalidSpec(
                "augmentation magnitudes must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::InvalidSpec(format!(
                "hflip_prob {} outside [0, 1]",
                self.hflip_prob
            )));
        }
        let (lo, hi) = self.zoom_range;
        if !(lo <= 1.0 && 1.0 <= hi) {
            return Err(Error::InvalidSpec(format!(
                "zoom range ({lo}, {hi}) must bracket 1"
            )));
        }
        Ok(())
    }
}

/// Concrete drawn magnitudes for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Pixel shift `(dy, dx)`.
    pub shift: (f64, f64),
    pub rotation_rad: f64,
    pub hflip: bool,
    pub zoom: f64,
    pub intensity_shift: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            shift: (0.0, 0.0),
            rotation_rad: 0.0,
            hflip: false,
            zoom: 1.0,
            intensity_shift: 0.0,
        }
    }

    /// Draws magnitudes in the fixed order: translation, rotation, flip,
    /// zoom, intensity shift.
    pub fn draw<R: Rng>(config: &AugmentationConfig, h: usize, w: usize, rng: &mut R) -> Self {
        let ty = config.max_translation_frac * h as f64;
        let tx = config.max_translation_frac * w as f64;
        let dy = rng.gen_range(-ty..=ty);
        let dx = rng.gen_range(-tx..=tx);
        let deg = rng.gen_range(-config.max_rotation_deg..=config.max_rotation_deg);
        let hflip = rng.gen::<f64>() < config.hflip_prob;
        let zoom = rng.gen_range(config.zoom_range.0..=config.zoom_range.1);
        let m = config.max_intensity_shift_frac;
        let intensity_shift = rng.gen_range(-m..=m);
        AugmentParams {
            shift: (dy, dx),
            rotation_rad: deg * core::f64::consts::PI / 180.0,
            hflip,
            zoom,
            intensity_shift,
        }
    }
}

fn bilinear_zero_pad(img: &[f64], h: usize, w: usize, sy: f64, sx: f64) -> f64 {
    let fy = math::floor(sy);
    let fx = math::floor(sx);
    let wy = sy - fy;
    let wx = sx - fx;
    let sample = |y: f64, x: f64| -> f64 {
        if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
            0.0
        } else {
            img[y as usize * w + x as usize]
        }
    };
    let top = (1.0 - wx) * sample(fy, fx) + wx * sample(fy, fx + 1.0);
    let bottom = (1.0 - wx) * sample(fy + 1.0, fx) + wx * sample(fy + 1.0, fx + 1.0);
    (1.0 - wy) * top + wy * bottom
}

/// Applies fixed augmentation magnitudes to an `[H, W]` image with values in
/// `[0, 1]`. Identity magnitudes reproduce the input bit for bit.
pub fn apply_augment(image: &Tensor, params: &AugmentParams) -> Result<Tensor> {
    image.expect_rank(2, "augment input")?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let cos = math::cos(-params.rotation_rad);
    let sin = math::sin(-params.rotation_rad);
    let img = image.data();
    let mut out = Tensor::zeros(&[h, w]);
    {
        let od = out.data_mut();
        for oy in 0..h {
            for ox in 0..w {
                // invert zoom about the centre
                let qy = (oy as f64 - cy) / params.zoom + cy;
                let qx = (ox as f64 - cx) / params.zoom + cx;
                // invert rotation
                let ry = cy + sin * (qx - cx) + cos * (qy - cy);
                let rx = cx + cos * (qx - cx) - sin * (qy - cy);
                // invert translation
                let sy = ry - params.shift.0;
                let mut sx = rx - params.shift.1;
                // invert flip
                if params.hflip {
                    sx = (w - 1) as f64 - sx;
                }
                od[oy * w + ox] = bilinear_zero_pad(img, h, w, sy, sx);
            }
        }
        for v in od.iter_mut() {
            *v = (*v + params.intensity_shift).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Draws magnitudes from `config` and applies them.
pub fn augment<R: Rng>(image: &Tensor, config: &AugmentationConfig, rng: &mut R) -> Result<Tensor> {
    config.validate()?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let params = AugmentParams::draw(config, h, w, rng);
    apply_augment(image, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn test_image(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[h, w], |i| ((i * 31 + 7) % 97) as f64 / 96.0)
    }

    #[test]
    fn identity_params_reproduce_input_exactly() {
        let img = test_image(16, 12);
        let out = apply_augment(&img, &AugmentParams::identity()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn identity_config_reproduces_input_exactly() {
        let img = test_image(9, 9);
        let mut rng = stream_rng(3, "aug", 0);
        let out = augment(&img, &AugmentationConfig::identity(), &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn pure_hflip_reverses_columns_and_is_an_involution() {
        let img = test_image(8, 10);
        let params = AugmentParams {
            hflip: true,
            ..AugmentParams::identity()
        };
        let flipped = apply_augment(&img, &params).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                assert_eq!(flipped.data()[y * 10 + x], img.data()[y * 10 + (9 - x)]);
            }
        }
        let back = apply_augment(&flipped, &params).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pure_intensity_shift_adds_exactly() {
        let img = Tensor::from_fn(&[6, 6], |i| 0.2 + (i % 5) as f64 * 0.1);
        let params = AugmentParams {
            intensity_shift: 0.1,
            ..AugmentParams::identity()
        };
        let out = apply_augment(&img, &params).unwrap();
        for (o, i) in out.data().iter().zip(img.data()) {
            assert_eq!(*o, *i + 0.1);
        }
    }

    #[test]
    fn same_random_state_gives_identical_output() {
        let img = test_image(20, 20);
        let cfg = AugmentationConfig::default();
        let a = augment(&img, &cfg, &mut stream_rng(5, "aug", 1)).unwrap();
        let b = augment(&img, &cfg, &mut stream_rng(5, "aug", 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_stays_in_unit_range() {
        let img = test_image(24, 24);
        let cfg = AugmentationConfig {
            max_intensity_shift_frac: 0.5,
            ..AugmentationConfig::default()
        };
        let mut rng = stream_rng(9, "aug", 2);
        for _ in 0..20 {
            let out = augment(&img, &cfg, &mut rng).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn config_validation_rejects_bad_zoom() {
        let cfg = AugmentationConfig {
            zoom_range: (1.1, 1.2),
            ..AugmentationConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
