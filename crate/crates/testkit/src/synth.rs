//! Synthetic three-class grayscale images with class-dependent planted
//! patterns, robust to mild augmentation (shift, small rotation, horizontal
//! flip, mild zoom and intensity jitter):
//!
//! * class 0 — one bright disc at the centre
//! * class 1 — four discs near the corners
//! * class 2 — horizontal stripes
//!
//! Used by the training and pipeline test suites.

use cxrnet_core::data::{ClassLabel, Dataset};
use cxrnet_core::rng::{stream_rng, ChaCha8Rng};
use cxrnet_core::Tensor;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub size: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Uniform pixel noise amplitude.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 64,
            per_class: 100,
            seed: 7,
            noise: 0.06,
        }
    }
}

fn disc(img: &mut [f64], size: usize, cy: f64, cx: f64, sigma: f64, amp: f64) {
    for y in 0..size {
        for x in 0..size {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let r2 = dy * dy + dx * dx;
            img[y * size + x] += amp * (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
}

/// One synthetic image of the given class.
pub fn synth_image(class: usize, size: usize, rng: &mut ChaCha8Rng, noise: f64) -> Tensor {
    let n = size as f64;
    let base = 0.15 + rng.gen_range(-0.03..0.03);
    let amp = rng.gen_range(0.5..0.7);
    let mut img = vec![base; size * size];
    match class {
        0 => {
            let jit = n * 0.04;
            let cy = n / 2.0 + rng.gen_range(-jit..jit);
            let cx = n / 2.0 + rng.gen_range(-jit..jit);
            disc(&mut img, size, cy, cx, n * 0.12, amp);
        }
        1 => {
            let d = n * 0.22;
            let jit = n * 0.03;
            for (fy, fx) in [(d, d), (d, n - d), (n - d, d), (n - d, n - d)] {
                let cy = fy + rng.gen_range(-jit..jit);
                let cx = fx + rng.gen_range(-jit..jit);
                disc(&mut img, size, cy, cx, n * 0.07, amp);
            }
        }
        2 => {
            let period = n / 4.0;
            let phase = rng.gen_range(0.0..core::f64::consts::TAU);
            for y in 0..size {
                let v = amp * 0.5 * (1.0 + ((y as f64 / period) * core::f64::consts::TAU + phase).sin());
                for x in 0..size {
                    img[y * size + x] += v;
                }
            }
        }
        _ => panic!("synthetic classes are 0..3"),
    }
    for v in img.iter_mut() {
        *v += rng.gen_range(-noise..noise);
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::new(vec![size, size], img).expect("shape")
}

/// A balanced in-memory dataset with one patient per image.
///
/// `split` only names the patient-id prefix so train and test fixtures get
/// disjoint patient ids.
pub fn synth_dataset(cfg: &SynthConfig, split: &str) -> Dataset {
    let mut rng = stream_rng(cfg.seed, "synth", fnv(split));
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut patients = Vec::new();
    for class in 0..3 {
        for i in 0..cfg.per_class {
            images.push(synth_image(class, cfg.size, &mut rng, cfg.noise));
            labels.push(ClassLabel::from_index(class).expect("class"));
            patients.push(format!("{split}-c{class}-p{i:04}"));
        }
    }
    Dataset::new(images, labels, patients).expect("valid dataset")
}

fn fnv(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
