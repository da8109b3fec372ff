//! Occlusion-based critical-factor attribution.
//!
//! The audit question is whether the model keys on relevant image regions.
//! Each patch of the input is replaced by a flat occlusion value and the
//! model re-scored; the per-patch drop in the target class score forms the
//! drop map, and the top fraction of patches by drop becomes the
//! interpretation mask. Patch evaluations are independent, so the map is
//! identical however they are scheduled.

use crate::arch::{infer, ArchGraph, ParamStore};
use crate::error::{Error, Result};
use crate::optim::stack_images;
use crate::tensor::Tensor;
use alloc::format;
use alloc::vec::Vec;

/// Anything that maps an `[H, W]` image to class scores.
pub trait Scorer {
    fn class_scores(&self, image: &Tensor) -> Result<Vec<f64>>;
}

/// Scores images through an architecture graph's softmax output.
pub struct GraphScorer<'a> {
    pub graph: &'a ArchGraph,
    pub params: &'a ParamStore,
}

impl Scorer for GraphScorer<'_> {
    fn class_scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        let batch = stack_images(core::slice::from_ref(image))?;
        let probs = infer(self.graph, self.params, &batch)?;
        Ok(probs.data()[..probs.shape()[1]].to_vec())
    }
}

/// Adapter so closures can act as scorers in tests and tools.
pub struct FnScorer<F>(pub F);

impl<F: Fn(&Tensor) -> Result<Vec<f64>>> Scorer for FnScorer<F> {
    fn class_scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        (self.0)(image)
    }
}

/// Occlusion sweep settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributionConfig {
    /// Patch side in pixels.
    pub patch_size: usize,
    /// Step between patch origins; equal to `patch_size` for non-overlapping
    /// tiling.
    pub stride: usize,
    /// Intensity written into occluded patches.
    pub occlusion_value: f64,
    /// Fraction of patches selected as critical, in `(0, 1]`.
    pub selection_fraction: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            patch_size: 8,
            stride: 8,
            occlusion_value: 0.5,
            selection_fraction: 0.1,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 {
            return Err(Error::InvalidSpec(
                "patch_size and stride must be positive".into(),
            ));
        }
        if !(self.selection_fraction > 0.0 && self.selection_fraction <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "selection_fraction {} outside (0, 1]",
                self.selection_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.occlusion_value) {
            return Err(Error::InvalidSpec(format!(
                "occlusion_value {} outside [0, 1]",
                self.occlusion_value
            )));
        }
        Ok(())
    }
}

/// Result of one occlusion sweep: the per-patch score drops and the binary
/// selection grid over the patch tiling (edge patches may be smaller).
#[derive(Debug, Clone, PartialEq)]
pub struct InterpretationMask {
    pub target_class: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub image_h: usize,
    pub image_w: usize,
    /// Target score on the unoccluded image.
    pub base_score: f64,
    /// Per-patch drop of the target score under occlusion.
    pub score_drop_map: Vec<Vec<f64>>,
    /// Selected patches: the top `selection_fraction` by drop.
    pub grid: Vec<Vec<bool>>,
    /// Smallest drop among selected patches.
    pub threshold: f64,
    /// True when every drop is exactly zero — the sweep found no critical
    /// factors (e.g. a constant model).
    pub uninformative: bool,
}

impl InterpretationMask {
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid.len(), self.grid[0].len())
    }

    pub fn selected_count(&self) -> usize {
        self.grid.iter().flatten().filter(|&&s| s).count()
    }

    /// Pixel rectangle `(y0, x0, y1, x1)` of grid cell `(i, j)`, clipped to
    /// the image (exclusive upper bounds).
    pub fn patch_rect(&self, i: usize, j: usize) -> (usize, usize, usize, usize) {
        let y0 = i * self.stride;
        let x0 = j * self.stride;
        (
            y0,
            x0,
            (y0 + self.patch_size).min(self.image_h),
            (x0 + self.patch_size).min(self.image_w),
        )
    }

    /// Per-pixel selection mask (a pixel is selected if any selected patch
    /// covers it).
    pub fn pixel_mask(&self) -> Vec<bool> {
        let mut mask = alloc::vec![false; self.image_h * self.image_w];
        let (gh, gw) = self.grid_dims();
        for i in 0..gh {
            for j in 0..gw {
                if self.grid[i][j] {
                    let (y0, x0, y1, x1) = self.patch_rect(i, j);
                    for y in y0..y1 {
                        for x in x0..x1 {
                            mask[y * self.image_w + x] = true;
                        }
                    }
                }
            }
        }
        mask
    }
}

/// Selects the top `fraction` of patches by drop, ties broken by row-major
/// order. Returns the grid, the selection threshold (smallest selected
/// drop), and the selected count `ceil(fraction * patches)`.
pub fn select_patches(drops: &[Vec<f64>], fraction: f64) -> (Vec<Vec<bool>>, f64, usize) {
    let gh = drops.len();
    let gw = drops[0].len();
    let total = gh * gw;
    let k = (crate::math::ceil(fraction * total as f64) as usize).clamp(1, total);
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        let da = drops[a / gw][a % gw];
        let db = drops[b / gw][b % gw];
        db.partial_cmp(&da).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut grid = alloc::vec![alloc::vec![false; gw]; gh];
    let mut threshold = f64::INFINITY;
    for &idx in order.iter().take(k) {
        grid[idx / gw][idx % gw] = true;
        let d = drops[idx / gw][idx % gw];
        if d < threshold {
            threshold = d;
        }
    }
    (grid, threshold, k)
}

/// Runs the occlusion sweep for `target_class` and selects the critical
/// patches. Deterministic: same model, image and config give the same mask.
pub fn critical_factors(
    scorer: &dyn Scorer,
    image: &Tensor,
    target_class: usize,
    config: &AttributionConfig,
) -> Result<InterpretationMask> {
    config.validate()?;
    image.expect_rank(2, "attribution input")?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if config.patch_size > h || config.patch_size > w {
        return Err(Error::InvalidSpec(format!(
            "patch {} exceeds image {h}x{w}",
            config.patch_size
        )));
    }
    let base = scorer.class_scores(image)?;
    if target_class >= base.len() {
        return Err(Error::InvalidData(format!(
            "target class {target_class} out of range for {} scores",
            base.len()
        )));
    }
    let base_score = base[target_class];

    let gh = h.div_ceil(config.stride);
    let gw = w.div_ceil(config.stride);
    let mut drops = alloc::vec![alloc::vec![0.0f64; gw]; gh];
    let mut occluded = image.clone();
    for i in 0..gh {
        for j in 0..gw {
            let y0 = i * config.stride;
            let x0 = j * config.stride;
            let y1 = (y0 + config.patch_size).min(h);
            let x1 = (x0 + config.patch_size).min(w);
            occluded.data_mut().copy_from_slice(image.data());
            for y in y0..y1 {
                for x in x0..x1 {
                    occluded.data_mut()[y * w + x] = config.occlusion_value;
                }
            }
            let scores = scorer.class_scores(&occluded)?;
            drops[i][j] = base_score - scores[target_class];
        }
    }

    let uninformative = drops.iter().flatten().all(|&d| d == 0.0);
    let (grid, threshold, _) = select_patches(&drops, config.selection_fraction);
    Ok(InterpretationMask {
        target_class,
        patch_size: config.patch_size,
        stride: config.stride,
        image_h: h,
        image_w: w,
        base_score,
        score_drop_map: drops,
        grid,
        threshold,
        uninformative,
    })
}
