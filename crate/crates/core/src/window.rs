//! Sub-windows of a range image with azimuth wraparound.

use crate::error::{Error, Result};
use crate::image::{RangeImage, SemanticMask};
use crate::mask::mask_bounds;

/// `height x width` window whose columns wrap modulo the full image width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Window {
    /// Window of `size` centered on the mask's bounding box, with the origin
    /// snapped down to multiples of `align`. Rows are clamped to the image;
    /// columns wrap. Returns `None` for an empty mask.
    pub fn around(mask: &SemanticMask, size: (usize, usize), align: usize) -> Result<Option<Window>> {
        let (h, w) = mask.dims();
        let (wh, ww) = size;
        if wh == 0 || ww == 0 || wh > h || ww > w || align == 0 {
            return Err(Error::InvalidConfig(format!(
                "window {wh}x{ww} does not fit a {h}x{w} image"
            )));
        }
        let Some(b) = mask_bounds(mask) else {
            return Ok(None);
        };
        let (cr, cc) = b.center();
        let top = (cr - wh as f64 / 2.0).round().clamp(0.0, (h - wh) as f64) as usize;
        let row0 = top / align * align;
        let left = (cc - ww as f64 / 2.0).round() as i64;
        let col0 = (left.rem_euclid(w as i64) as usize) / align * align;
        Ok(Some(Window {
            row0,
            col0,
            height: wh,
            width: ww,
        }))
    }

    /// Full-image column of window column `c`.
    pub fn column(&self, c: usize, full_width: usize) -> usize {
        (self.col0 + c) % full_width
    }

    /// True when every set pixel of `mask` falls inside the window.
    pub fn covers(&self, mask: &SemanticMask) -> bool {
        let w = mask.width();
        mask.pixels().iter().all(|p| {
            let dc = (p.col + w - self.col0) % w;
            p.row >= self.row0 && p.row < self.row0 + self.height && dc < self.width
        })
    }

    fn check(&self, dims: (usize, usize)) -> Result<()> {
        if self.row0 + self.height > dims.0 || self.width > dims.1 {
            return Err(Error::InvalidConfig(format!(
                "window {self:?} exceeds a {}x{} image",
                dims.0, dims.1
            )));
        }
        Ok(())
    }

    pub fn crop_image(&self, img: &RangeImage) -> Result<RangeImage> {
        self.check(img.dims())?;
        let mut out = RangeImage::empty(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                let (range, intensity) = img.get(self.row0 + r, self.column(c, img.width()));
                out.set(r, c, range, intensity);
            }
        }
        Ok(out)
    }

    pub fn crop_mask(&self, mask: &SemanticMask) -> Result<SemanticMask> {
        self.check(mask.dims())?;
        let mut out = SemanticMask::zeros(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(r, c, mask.get(self.row0 + r, self.column(c, mask.width())));
            }
        }
        Ok(out)
    }

    /// Writes `patch` back into `dst` at the window position.
    pub fn paste_image(&self, dst: &mut RangeImage, patch: &RangeImage) -> Result<()> {
        self.check(dst.dims())?;
        if patch.dims() != (self.height, self.width) {
            return Err(Error::DimMismatch {
                left: patch.dims(),
                right: (self.height, self.width),
            });
        }
        let w = dst.width();
        for r in 0..self.height {
            for c in 0..self.width {
                let (range, intensity) = patch.get(r, c);
                dst.set(self.row0 + r, self.column(c, w), range, intensity);
            }
        }
        Ok(())
    }
}
