//! Ancestral sampling with known-region replacement, and compositing.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{RangeImage, SemanticMask};
use crate::mask::downsample_mask;
use crate::projection::ProjectionConfig;

use super::codec::{decode, encode, Latent, BLOCK};
use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;
use super::train::gaussian_latent;
use super::{check_image_dims, denormalize_image, normalize_image};

/// Masked pixels from `generated`, every other pixel copied from `original`.
pub fn composite(generated: &RangeImage, original: &RangeImage, mask: &SemanticMask) -> Result<RangeImage> {
    check_image_dims(generated, original)?;
    crate::image::check_dims(original.dims(), mask.dims())?;
    let mut out = original.clone();
    for p in mask.pixels() {
        let (r, i) = generated.get(p.row, p.col);
        out.set(p.row, p.col, r, i);
    }
    Ok(out)
}

/// Overwrites every channel of the cells where `latent_mask` is unset.
fn replace_known(z: &mut Latent, known: &Latent, latent_mask: &SemanticMask) {
    let (h, w, c) = z.dim();
    for i in 0..h {
        for j in 0..w {
            if !latent_mask.get(i, j) {
                for k in 0..c {
                    z[[i, j, k]] = known[[i, j, k]];
                }
            }
        }
    }
}

/// Generates the masked region of `x_m`.
///
/// Runs `T` ancestral steps from a unit Gaussian latent. Before each model
/// call the cells outside the latent mask are overwritten with the forward-
/// diffused encoding of `original` (or of `x_m` when no original is given),
/// and after the last step with the clean encoding. Each step predicts the
/// clean latent from the noise estimate, clips it to `[-1, 1]` and moves to
/// the posterior mean given that estimate. The decoded image is composited
/// so that pixels outside `mask` are copied bit-exactly.
///
/// Random draws, all from `rng` and all full latent tensors in row-major
/// order: the initial `z_T`; then for each `t` from `T` down to 1 the
/// known-region noise, followed by the step noise when `t > 1`. The step
/// noise scale is the posterior standard deviation.
pub fn sample(
    x_m: &RangeImage,
    mask: &SemanticMask,
    original: Option<&RangeImage>,
    model: &Denoiser,
    sched: &NoiseSchedule,
    cfg: &ProjectionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RangeImage> {
    crate::image::check_dims(x_m.dims(), mask.dims())?;
    if mask.is_empty() {
        return Err(Error::Empty("sampling needs a non-empty mask"));
    }
    let base = original.unwrap_or(x_m);
    check_image_dims(x_m, base)?;

    let cond = encode(&normalize_image(x_m, cfg)?)?;
    let known = encode(&normalize_image(base, cfg)?)?;
    let latent_mask = downsample_mask(mask, BLOCK, BLOCK)?;
    let z = reverse_chain(&known, &latent_mask, sched, rng, |z, t| {
        model.predict(z, t, &cond, &latent_mask)
    })?;

    let generated = denormalize_image(&decode(&z, 2)?, cfg)?;
    composite(&generated, base, mask)
}

/// The latent part of [`sample`], with the noise estimate supplied by
/// `predict(z_t, t)`.
pub fn reverse_chain(
    known: &Latent,
    latent_mask: &SemanticMask,
    sched: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
    mut predict: impl FnMut(&Latent, usize) -> Result<Latent>,
) -> Result<Latent> {
    let mut z = gaussian_latent(rng, known.dim());
    for t in (1..=sched.steps()).rev() {
        let ab = sched.alpha_bar(t)?;
        let noise = gaussian_latent(rng, known.dim());
        let mut noisy_known = known * ab.sqrt();
        noisy_known.scaled_add((1.0 - ab).sqrt(), &noise);
        replace_known(&mut z, &noisy_known, latent_mask);

        let eps_hat = predict(&z, t)?;
        let mut x0 = z.clone();
        x0.scaled_add(-(1.0 - ab).sqrt(), &eps_hat);
        x0.mapv_inplace(|v| (v / ab.sqrt()).clamp(-1.0, 1.0));
        let ab_prev = sched.alpha_bar_prev(t)?;
        let c0 = ab_prev.sqrt() * sched.beta(t)? / (1.0 - ab);
        let ct = sched.alpha(t)?.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        z *= ct;
        z.scaled_add(c0, &x0);
        if t > 1 {
            let sigma = sched.posterior_variance(t)?.sqrt();
            let step_noise = gaussian_latent(rng, known.dim());
            z.scaled_add(sigma, &step_noise);
        }
    }
    replace_known(&mut z, known, latent_mask);
    Ok(z)
}

/// Baseline without a model: the masked region filled with a decoded unit
/// Gaussian latent.
pub fn noise_fill(
    x_m: &RangeImage,
    mask: &SemanticMask,
    original: Option<&RangeImage>,
    cfg: &ProjectionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RangeImage> {
    let (h, w) = x_m.dims();
    if h % BLOCK != 0 || w % BLOCK != 0 {
        return Err(Error::NotDivisible {
            dims: (h, w),
            factors: (BLOCK, BLOCK),
        });
    }
    let z = gaussian_latent(rng, (h / BLOCK, w / BLOCK, 2 * BLOCK * BLOCK));
    let generated = denormalize_image(&decode(&z, 2)?, cfg)?;
    composite(&generated, original.unwrap_or(x_m), mask)
}
