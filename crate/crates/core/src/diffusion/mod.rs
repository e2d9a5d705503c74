//! Desk-scale latent diffusion over range images.
//!
//! Images are normalized to `[-1, 1]`, folded into a latent grid by the fixed
//! [`codec`], noised along a linear [`NoiseSchedule`], and denoised by a
//! [`Denoiser`] that sees the noisy latent concatenated with the encoded
//! masked image and the max-pooled latent mask. Training uses the
//! [`region_loss`]; sampling is ancestral with the known region replaced at
//! every step, followed by pixel-space compositing.

pub mod checkpoint;
pub mod codec;
pub mod denoiser;
pub mod loss;
pub mod sample;
pub mod schedule;
pub mod train;

pub use codec::{decode, encode, Latent, BLOCK};
pub use denoiser::{Denoiser, DenoiserConfig, Dilations, Params};
pub use loss::{region_loss, region_loss_with_grad};
pub use sample::{composite, noise_fill, sample};
pub use schedule::NoiseSchedule;
pub use train::{batch_gradient, train_step, LatentExample, Optimizer, TrainConfig, TrainExample, Trainer};

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::image::{check_dims, RangeImage};
use crate::projection::ProjectionConfig;

/// Generated returns closer than this are treated as dropped rays.
pub const MIN_RETURN_RANGE: f64 = 0.5;

/// `H x W x 2` grid in `[-1, 1]`: range scaled by `r_max`, intensity as is,
/// both mapped through `v * 2 - 1`. No-return pixels become `(-1, -1)`.
pub fn normalize_image(img: &RangeImage, cfg: &ProjectionConfig) -> Result<Array3<f64>> {
    let (h, w) = img.dims();
    let mut out = Array3::zeros((h, w, 2));
    for r in 0..h {
        for c in 0..w {
            let (range, intensity) = img.get(r, c);
            let range = range as f64;
            if range > cfg.r_max {
                return Err(Error::RangeTooLarge {
                    range,
                    r_max: cfg.r_max,
                });
            }
            out[[r, c, 0]] = range / cfg.r_max * 2.0 - 1.0;
            out[[r, c, 1]] = intensity as f64 * 2.0 - 1.0;
        }
    }
    Ok(out)
}

/// Inverse of [`normalize_image`] after clamping to `[-1, 1]`. Ranges below
/// [`MIN_RETURN_RANGE`] become the no-return sentinel.
pub fn denormalize_image(x: &Array3<f64>, cfg: &ProjectionConfig) -> Result<RangeImage> {
    let (h, w, c) = x.dim();
    if c != 2 {
        return Err(Error::ShapeMismatch {
            left: vec![h, w, c],
            right: vec![h, w, 2],
        });
    }
    let mut img = RangeImage::empty(h, w);
    for r in 0..h {
        for col in 0..w {
            let v0 = x[[r, col, 0]];
            let v1 = x[[r, col, 1]];
            if !v0.is_finite() || !v1.is_finite() {
                return Err(Error::NonFinite { index: r * w + col });
            }
            let range = (v0.clamp(-1.0, 1.0) + 1.0) / 2.0 * cfg.r_max;
            let intensity = (v1.clamp(-1.0, 1.0) + 1.0) / 2.0;
            if range >= MIN_RETURN_RANGE {
                img.set(r, col, range as f32, intensity as f32);
            }
        }
    }
    Ok(img)
}

/// `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`.
pub fn forward_diffuse(z0: &Latent, t: usize, eps: &Latent, sched: &NoiseSchedule) -> Result<Latent> {
    if z0.dim() != eps.dim() {
        return Err(Error::ShapeMismatch {
            left: z0.shape().to_vec(),
            right: eps.shape().to_vec(),
        });
    }
    let ab = sched.alpha_bar(t)?;
    let mut out = z0 * ab.sqrt();
    out.scaled_add((1.0 - ab).sqrt(), eps);
    Ok(out)
}

pub(crate) fn check_image_dims(a: &RangeImage, b: &RangeImage) -> Result<()> {
    check_dims(a.dims(), b.dims())
}
