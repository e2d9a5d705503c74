//! Range images and binary masks in range-view pixel space.

use crate::error::{Error, Result};
use crate::tensor_file::Tensor;

/// Integer pixel address, `row` down from the top scanline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Pixel { row, col }
    }
}

/// Two-channel range-view image. A range of exactly `0.0` marks a pixel
/// without a return; its intensity is always `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    range: Vec<f32>,
    intensity: Vec<f32>,
}

impl RangeImage {
    /// An all-sentinel image.
    pub fn empty(height: usize, width: usize) -> Self {
        RangeImage {
            height,
            width,
            range: vec![0.0; height * width],
            intensity: vec![0.0; height * width],
        }
    }

    pub fn from_parts(height: usize, width: usize, range: Vec<f32>, intensity: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DegenerateDims(height, width, 2));
        }
        for v in [&range, &intensity] {
            if v.len() != height * width {
                return Err(Error::LengthMismatch {
                    expected: height * width,
                    actual: v.len(),
                });
            }
        }
        let mut img = RangeImage {
            height,
            width,
            range,
            intensity,
        };
        for i in 0..img.range.len() {
            if !img.range[i].is_finite() || !img.intensity[i].is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if img.range[i] <= 0.0 {
                img.range[i] = 0.0;
                img.intensity[i] = 0.0;
            }
        }
        Ok(img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn range(&self) -> &[f32] {
        &self.range
    }

    pub fn intensity(&self) -> &[f32] {
        &self.intensity
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> (f32, f32) {
        let i = self.index(row, col);
        (self.range[i], self.intensity[i])
    }

    /// Writes a pixel; non-positive ranges become the no-return sentinel.
    pub fn set(&mut self, row: usize, col: usize, range: f32, intensity: f32) {
        let i = self.index(row, col);
        if range > 0.0 {
            self.range[i] = range;
            self.intensity[i] = intensity;
        } else {
            self.range[i] = 0.0;
            self.intensity[i] = 0.0;
        }
    }

    pub fn has_return(&self, row: usize, col: usize) -> bool {
        self.range[self.index(row, col)] > 0.0
    }

    pub fn return_count(&self) -> usize {
        self.range.iter().filter(|r| **r > 0.0).count()
    }

    /// `H x W x 2` tensor, channel 0 range, channel 1 intensity.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.range.len() * 2);
        for (r, i) in self.range.iter().zip(&self.intensity) {
            data.push(*r);
            data.push(*i);
        }
        Tensor::new((self.height, self.width, 2), data).expect("image dims are valid")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = t.dims();
        if c != 2 {
            return Err(Error::ShapeMismatch {
                left: vec![h, w, c],
                right: vec![h, w, 2],
            });
        }
        let data = t.data();
        let range = data.iter().step_by(2).copied().collect();
        let intensity = data.iter().skip(1).step_by(2).copied().collect();
        RangeImage::from_parts(h, w, range, intensity)
    }
}

/// Binary edit-region mask, same grid as its range image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl SemanticMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        SemanticMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        SemanticMask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: bits.len(),
            });
        }
        Ok(SemanticMask { height, width, bits })
    }

    pub fn from_pixels(height: usize, width: usize, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let mut m = SemanticMask::zeros(height, width);
        for p in pixels {
            m.set(p.row, p.col, true);
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> Vec<Pixel> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| Pixel::new(i / self.width, i % self.width))
            .collect()
    }

    pub fn union(&self, other: &SemanticMask) -> Result<SemanticMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(SemanticMask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &SemanticMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        Tensor::new((self.height, self.width, 1), data).expect("mask dims are valid")
    }

    /// Any non-zero value counts as set.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = t.dims();
        if c != 1 {
            return Err(Error::ShapeMismatch {
                left: vec![h, w, c],
                right: vec![h, w, 1],
            });
        }
        Ok(SemanticMask {
            height: h,
            width: w,
            bits: t.data().iter().map(|v| *v != 0.0).collect(),
        })
    }
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch { left: a, right: b });
    }
    Ok(())
}
