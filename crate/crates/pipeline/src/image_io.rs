//! Grayscale image decoding/encoding (PNG and 8-bit PGM), preprocessing to
//! network input, and mask-overlay rendering.

use crate::error::{PipelineError, Result};
use cxrnet_core::data::resize_bilinear;
use cxrnet_core::explain::InterpretationMask;
use cxrnet_core::Tensor;
use image::{GrayImage, ImageReader, RgbImage};
use std::path::Path;

/// Decodes any supported image to a grayscale `[H, W]` tensor in `[0, 1]`.
pub fn load_gray(path: &Path) -> Result<Tensor> {
    let decoded = ImageReader::open(path)
        .map_err(PipelineError::io(path))?
        .decode()
        .map_err(|e| PipelineError::format(path, format!("cannot decode: {e}")))?;
    let gray = decoded.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data: Vec<f64> = gray.as_raw().iter().map(|&p| f64::from(p) / 255.0).collect();
    Tensor::new(vec![h, w], data).map_err(PipelineError::from)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `[H, W]` tensor as an 8-bit grayscale image; the format follows
/// the extension (`.png` or `.pgm`).
pub fn save_gray(path: &Path, img: &Tensor) -> Result<()> {
    img.expect_rank(2, "image").map_err(PipelineError::from)?;
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let buf: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let gray = GrayImage::from_raw(w as u32, h as u32, buf).expect("sized buffer");
    gray.save(path)
        .map_err(|e| PipelineError::format(path, format!("cannot encode: {e}")))
}

/// Decodes, resizes to `size` x `size` with bilinear interpolation, and
/// scales to `[0, 1]`.
pub fn preprocess(path: &Path, size: usize) -> Result<Tensor> {
    let img = load_gray(path)?;
    resize_bilinear(&img, size, size).map_err(PipelineError::from)
}

/// Renders the image with selected patches tinted red. Unselected pixels
/// keep their exact gray value in all three channels, so an empty mask
/// round-trips pixel-identically.
pub fn save_overlay(path: &Path, img: &Tensor, mask: &InterpretationMask) -> Result<()> {
    img.expect_rank(2, "overlay image").map_err(PipelineError::from)?;
    let (h, w) = (img.shape()[0], img.shape()[1]);
    if (mask.image_h, mask.image_w) != (h, w) {
        return Err(PipelineError::Validation(cxrnet_core::Error::ShapeMismatch(
            format!(
                "mask tiles {}x{} but image is {h}x{w}",
                mask.image_h, mask.image_w
            ),
        )));
    }
    let selected = mask.pixel_mask();
    let mut rgb = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let q = quantize(img.data()[y * w + x]);
            let px = if selected[y * w + x] {
                let r = 128u8.saturating_add(q / 2);
                [r, q / 2, q / 2]
            } else {
                [q, q, q]
            };
            rgb.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    rgb.save(path)
        .map_err(|e| PipelineError::format(path, format!("cannot encode: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cxrnet_core::explain::{critical_factors, AttributionConfig, FnScorer};

    fn gradient_image(n: usize) -> Tensor {
        Tensor::from_fn(&[n, n], |i| (i % 256) as f64 / 255.0)
    }

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = gradient_image(24);
        save_gray(&path, &img).unwrap();
        let back = load_gray(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_round_trip_works() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = gradient_image(16);
        save_gray(&path, &img).unwrap();
        let back = load_gray(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
    }

    #[test]
    fn solid_white_preprocesses_to_all_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        save_gray(&path, &Tensor::filled(&[10, 10], 1.0)).unwrap();
        let t = preprocess(&path, 8).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn corrupt_file_rejected_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.png");
        std::fs::write(&path, b"not an image").unwrap();
        let err = load_gray(&path).unwrap_err();
        assert!(err.to_string().contains("broken.png"));
    }

    fn mask_for(img: &Tensor, fraction: f64) -> InterpretationMask {
        let scorer = FnScorer(|t: &Tensor| {
            Ok(vec![t.data().iter().sum::<f64>() / t.numel() as f64, 0.0, 0.0])
        });
        critical_factors(
            &scorer,
            img,
            0,
            &AttributionConfig {
                patch_size: 8,
                stride: 8,
                occlusion_value: 0.0,
                selection_fraction: fraction,
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_mask_overlay_decodes_identically_to_plain_render() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient_image(16);
        let mut mask = mask_for(&img, 0.1);
        for row in mask.grid.iter_mut() {
            row.fill(false);
        }
        let plain = dir.path().join("plain.png");
        let overlaid = dir.path().join("overlay.png");
        save_gray(&plain, &img).unwrap();
        save_overlay(&overlaid, &img, &mask).unwrap();
        let a = load_gray(&plain).unwrap();
        let b = load_gray(&overlaid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_mask_tints_every_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient_image(16);
        let mask = mask_for(&img, 1.0);
        assert_eq!(mask.selected_count(), 4);
        let plain = dir.path().join("plain.png");
        let overlaid = dir.path().join("overlay.png");
        save_gray(&plain, &img).unwrap();
        save_overlay(&overlaid, &img, &mask).unwrap();
        let a = load_gray(&plain).unwrap();
        let b = load_gray(&overlaid).unwrap();
        let differing = a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| x != y)
            .count();
        assert_eq!(differing, 16 * 16);
    }

    #[test]
    fn single_patch_overlay_differs_exactly_inside_the_patch() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient_image(16);
        let mut mask = mask_for(&img, 0.1);
        for row in mask.grid.iter_mut() {
            row.fill(false);
        }
        mask.grid[1][0] = true;
        let plain = dir.path().join("plain.png");
        let overlaid = dir.path().join("overlay.png");
        save_gray(&plain, &img).unwrap();
        save_overlay(&overlaid, &img, &mask).unwrap();
        let a = load_gray(&plain).unwrap();
        let b = load_gray(&overlaid).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let inside = (8..16).contains(&y) && x < 8;
                let same = a.data()[y * 16 + x] == b.data()[y * 16 + x];
                assert_eq!(!same, inside, "pixel ({y},{x})");
            }
        }
    }
}
