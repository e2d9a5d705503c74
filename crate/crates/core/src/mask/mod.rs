//! Semantic masks in range-view space.
//!
//! Masks come either from labeled points (training) or from an authored
//! [`OrientedBox`] (editing). Either way the raw pixel set is regularized by
//! its convex hull: [`seam_unwrap`] handles the azimuth seam,
//! [`convex_hull`] finds the polygon and [`rasterize_hull`] fills it.

mod hull;
mod raster;
mod seam;

pub use hull::{convex_hull, cross, GridPoint, Hull, PixelPolygon};
pub use raster::rasterize_hull;
pub use seam::{seam_unwrap, Unwrapped};

use crate::error::{Error, Result};
use crate::image::{check_dims, RangeImage, SemanticMask};
use crate::projection::{cartesian_to_spherical, pixel_of, Projection, ProjectionConfig};
use crate::types::{OrientedBox, Point, PointCloud};

/// Default face sampling density for [`mask_from_box`].
pub const DEFAULT_SAMPLES_PER_FACE: usize = 400;

/// Sets every pixel that at least one point of class `target` projects to,
/// occluded points included.
pub fn mask_from_labeled_points(
    cloud: &PointCloud,
    labels: &[u16],
    target: u16,
    projection: &Projection,
) -> Result<SemanticMask> {
    if labels.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: labels.len(),
        });
    }
    if projection.assignment.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: projection.assignment.len(),
        });
    }
    let (h, w) = projection.image.dims();
    let mut mask = SemanticMask::zeros(h, w);
    for (label, px) in labels.iter().zip(&projection.assignment) {
        if let (true, Some(px)) = (*label == target, px) {
            mask.set(px.row, px.col, true);
        }
    }
    Ok(mask)
}

/// Radical inverse of `i` in `base`; nested prefixes give nested sample sets.
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Halton samples on the six faces of a box, `samples_per_face` each.
/// Growing the count only appends samples.
pub fn box_surface_samples(b: &OrientedBox, samples_per_face: usize) -> Vec<[f64; 3]> {
    let h = b.half_extents();
    let mut out = Vec::with_capacity(6 * samples_per_face);
    for axis in 0..3 {
        let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [-1.0, 1.0] {
            for i in 1..=samples_per_face {
                let mut l = [0.0; 3];
                l[axis] = side * h[axis];
                l[ua] = (2.0 * radical_inverse(i, 2) - 1.0) * h[ua];
                l[va] = (2.0 * radical_inverse(i, 3) - 1.0) * h[va];
                out.push(b.to_world(l[0], l[1], l[2]));
            }
        }
    }
    out
}

/// Pixels hit by the sampled surface of `b`; empty when the box is entirely
/// outside the elevation field of view.
pub fn mask_from_box(b: &OrientedBox, cfg: &ProjectionConfig, samples_per_face: usize) -> Result<SemanticMask> {
    b.validate()?;
    let mut mask = SemanticMask::zeros(cfg.height, cfg.width);
    for s in box_surface_samples(b, samples_per_face) {
        let Ok((_, theta, phi)) = cartesian_to_spherical(&Point::new(s[0], s[1], s[2], 0.0)) else {
            continue;
        };
        if let Some(px) = pixel_of(theta, phi, cfg) {
            mask.set(px.row, px.col, true);
        }
    }
    Ok(mask)
}

/// Full regularization: seam unwrap, hull, fill, re-wrap. An empty set gives
/// an empty mask.
pub fn hull_mask(mask: &SemanticMask) -> SemanticMask {
    let pixels = mask.pixels();
    if pixels.is_empty() {
        return mask.clone();
    }
    let unwrapped = seam_unwrap(&pixels, mask.width());
    let hull = convex_hull(&unwrapped.points).expect("pixel set is non-empty");
    raster::fill(&hull, mask.height(), mask.width(), true)
}

/// Hull-regularized mask authored from a box.
pub fn box_mask(b: &OrientedBox, cfg: &ProjectionConfig, samples_per_face: usize) -> Result<SemanticMask> {
    Ok(hull_mask(&mask_from_box(b, cfg, samples_per_face)?))
}

/// Masked pixels become the no-return sentinel.
pub fn apply_mask(img: &RangeImage, mask: &SemanticMask) -> Result<RangeImage> {
    check_dims(img.dims(), mask.dims())?;
    let mut out = img.clone();
    for p in mask.pixels() {
        out.set(p.row, p.col, 0.0, 0.0);
    }
    Ok(out)
}

/// Max-pools the mask by `factor_h x factor_w` blocks.
pub fn downsample_mask(mask: &SemanticMask, factor_h: usize, factor_w: usize) -> Result<SemanticMask> {
    let (h, w) = mask.dims();
    if factor_h == 0 || factor_w == 0 || h % factor_h != 0 || w % factor_w != 0 {
        return Err(Error::NotDivisible {
            dims: (h, w),
            factors: (factor_h, factor_w),
        });
    }
    let mut out = SemanticMask::zeros(h / factor_h, w / factor_w);
    for p in mask.pixels() {
        out.set(p.row / factor_h, p.col / factor_w, true);
    }
    Ok(out)
}

/// Block replication, the right inverse of [`downsample_mask`] on coverage.
pub fn upsample_mask(mask: &SemanticMask, factor_h: usize, factor_w: usize) -> SemanticMask {
    let (h, w) = mask.dims();
    let mut out = SemanticMask::zeros(h * factor_h, w * factor_w);
    for p in mask.pixels() {
        for r in 0..factor_h {
            for c in 0..factor_w {
                out.set(p.row * factor_h + r, p.col * factor_w + c, true);
            }
        }
    }
    out
}

/// Row range and seam-unwrapped column range covering all set pixels.
pub fn mask_bounds(mask: &SemanticMask) -> Option<MaskBounds> {
    let pixels = mask.pixels();
    if pixels.is_empty() {
        return None;
    }
    let u = seam_unwrap(&pixels, mask.width());
    let row0 = u.points.iter().map(|p| p.row).min()? as usize;
    let row1 = u.points.iter().map(|p| p.row).max()? as usize;
    let col0 = u.points.iter().map(|p| p.col).min()?;
    let col1 = u.points.iter().map(|p| p.col).max()?;
    Some(MaskBounds { row0, row1, col0, col1 })
}

/// Inclusive bounds of a mask in seam-unwrapped column space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskBounds {
    pub row0: usize,
    pub row1: usize,
    pub col0: i64,
    pub col1: i64,
}

impl MaskBounds {
    pub fn center(&self) -> (f64, f64) {
        (
            (self.row0 + self.row1) as f64 / 2.0,
            (self.col0 + self.col1) as f64 / 2.0,
        )
    }
}
