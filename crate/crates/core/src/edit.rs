//! Box-driven scene edits on full range images.
//!
//! Each edit masks the pixels covered by an authored box, regenerates them
//! inside a window around the mask and pastes the window back. Pixels
//! outside the mask are never written with new values.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{checkpoint, noise_fill, sample, Denoiser, NoiseSchedule, BLOCK};
use crate::error::{Error, Result};
use crate::image::{RangeImage, SemanticMask};
use crate::mask::{apply_mask, box_mask, mask_bounds, DEFAULT_SAMPLES_PER_FACE};
use crate::projection::ProjectionConfig;
use crate::tensor_file::Tensor;
use crate::types::{OrientedBox, PointCloud};
use crate::window::Window;

/// Smallest window edits run in; larger masks get a larger window.
pub const DEFAULT_WINDOW: (usize, usize) = (32, 256);
/// Rows and columns kept around the mask when the window has to grow.
const MARGIN: usize = 8;

fn round_up(v: usize, k: usize) -> usize {
    v.div_ceil(k) * k
}

/// Window for `mask`: at least `min_size`, grown in steps of [`BLOCK`] to
/// cover the mask plus a margin, never larger than the image.
pub fn edit_window(mask: &SemanticMask, min_size: (usize, usize)) -> Result<Option<Window>> {
    let Some(b) = mask_bounds(mask) else {
        return Ok(None);
    };
    let (h, w) = mask.dims();
    let rows = round_up(b.row1 - b.row0 + 1 + 2 * MARGIN, BLOCK);
    let cols = round_up((b.col1 - b.col0 + 1) as usize + 2 * MARGIN, BLOCK);
    let size = (rows.max(min_size.0).min(h), cols.max(min_size.1).min(w));
    match Window::around(mask, size, BLOCK)? {
        Some(win) if win.covers(mask) => Ok(Some(win)),
        _ => Ok(Some(Window {
            row0: 0,
            col0: 0,
            height: h,
            width: w,
        })),
    }
}

/// Runs `fill(crop, crop_mask)` in the edit window and pastes the result.
fn windowed(
    image: &RangeImage,
    mask: &SemanticMask,
    min_size: (usize, usize),
    fill: impl FnOnce(&RangeImage, &SemanticMask) -> Result<RangeImage>,
) -> Result<RangeImage> {
    crate::image::check_dims(image.dims(), mask.dims())?;
    let Some(win) = edit_window(mask, min_size)? else {
        return Ok(image.clone());
    };
    let crop = win.crop_image(image)?;
    let crop_mask = win.crop_mask(mask)?;
    let patch = fill(&crop, &crop_mask)?;
    let mut out = image.clone();
    win.paste_image(&mut out, &patch)?;
    Ok(out)
}

/// Trained model plus everything needed to run edits.
#[derive(Debug, Clone)]
pub struct Generator {
    pub model: Denoiser,
    pub schedule: NoiseSchedule,
    pub projection: ProjectionConfig,
    pub window: (usize, usize),
    pub samples_per_face: usize,
}

/// Result of a sequence of box edits.
#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub image: RangeImage,
    /// Hull mask of each box, empty for boxes outside the field of view.
    pub masks: Vec<SemanticMask>,
}

impl EditOutcome {
    pub fn union_mask(&self) -> SemanticMask {
        let (h, w) = self.image.dims();
        self.masks.iter().fold(SemanticMask::zeros(h, w), |acc, m| {
            acc.union(m).expect("masks share dims")
        })
    }
}

impl Generator {
    pub fn new(model: Denoiser, schedule: NoiseSchedule, projection: ProjectionConfig) -> Self {
        Generator {
            model,
            schedule,
            projection,
            window: DEFAULT_WINDOW,
            samples_per_face: DEFAULT_SAMPLES_PER_FACE,
        }
    }

    pub fn from_checkpoint(dir: impl AsRef<Path>, projection: ProjectionConfig) -> Result<Self> {
        let (model, config) = checkpoint::load(dir)?;
        Ok(Generator::new(model, config.schedule()?, projection))
    }

    pub fn box_mask(&self, b: &OrientedBox) -> Result<SemanticMask> {
        box_mask(b, &self.projection, self.samples_per_face)
    }

    fn check(&self, image: &RangeImage) -> Result<()> {
        crate::image::check_dims(image.dims(), (self.projection.height, self.projection.width))
    }

    /// Regenerates the masked pixels of `image` from `seed`. An empty mask
    /// returns the image unchanged.
    pub fn inpaint(&self, image: &RangeImage, mask: &SemanticMask, seed: u64) -> Result<RangeImage> {
        self.check(image)?;
        windowed(image, mask, self.window, |crop, crop_mask| {
            let x_m = apply_mask(crop, crop_mask)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(
                &x_m,
                crop_mask,
                Some(crop),
                &self.model,
                &self.schedule,
                &self.projection,
                &mut rng,
            )
        })
    }

    /// Applies `boxes` in order; box `k` is generated with seed `seed + k`.
    pub fn generate(&self, image: &RangeImage, boxes: &[OrientedBox], seed: u64) -> Result<EditOutcome> {
        self.check(image)?;
        let mut current = image.clone();
        let mut masks = Vec::with_capacity(boxes.len());
        for (k, b) in boxes.iter().enumerate() {
            let mask = self.box_mask(b)?;
            current = self.inpaint(&current, &mask, seed.wrapping_add(k as u64))?;
            masks.push(mask);
        }
        Ok(EditOutcome { image: current, masks })
    }
}

/// Model-free baseline: the masked region filled with decoded noise, run in
/// the same window an edit would use.
pub fn noise_inpaint(
    image: &RangeImage,
    mask: &SemanticMask,
    projection: &ProjectionConfig,
    seed: u64,
) -> Result<RangeImage> {
    windowed(image, mask, DEFAULT_WINDOW, |crop, crop_mask| {
        let x_m = apply_mask(crop, crop_mask)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        noise_fill(&x_m, crop_mask, Some(crop), projection, &mut rng)
    })
}

/// Square bird's-eye-view grid centered on the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevConfig {
    /// Half side length, meters.
    pub extent: f64,
    pub cells: usize,
}

impl Default for BevConfig {
    fn default() -> Self {
        BevConfig {
            extent: 40.0,
            cells: 256,
        }
    }
}

/// `cells x cells x 1` occupancy grid, 1 where at least one point falls in
/// the cell. Rows grow toward `-x` and columns toward `-y`, so forward is
/// up and left is left.
pub fn bev_occupancy(cloud: &PointCloud, cfg: &BevConfig) -> Result<Tensor> {
    if cfg.cells == 0 || !(cfg.extent > 0.0) {
        return Err(Error::InvalidConfig(format!("invalid BEV grid {cfg:?}")));
    }
    let n = cfg.cells;
    let cell = 2.0 * cfg.extent / n as f64;
    let mut data = vec![0.0f32; n * n];
    for p in &cloud.points {
        let r = ((cfg.extent - p.x) / cell).floor();
        let c = ((cfg.extent - p.y) / cell).floor();
        if r >= 0.0 && c >= 0.0 && r < n as f64 && c < n as f64 {
            data[r as usize * n + c as usize] = 1.0;
        }
    }
    Tensor::new((n, n, 1), data)
}
