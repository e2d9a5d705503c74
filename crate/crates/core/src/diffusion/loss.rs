//! Region-focused noise-prediction loss.
//!
//! Squared error between true and predicted noise, averaged over every
//! channel of the latent cells selected by the latent mask. Normalizing by
//! the selected element count keeps the loss comparable across mask sizes.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::image::SemanticMask;

fn check(eps: &Array3<f64>, eps_hat: &Array3<f64>, latent_mask: &SemanticMask) -> Result<usize> {
    if eps.dim() != eps_hat.dim() {
        return Err(Error::ShapeMismatch {
            left: eps.shape().to_vec(),
            right: eps_hat.shape().to_vec(),
        });
    }
    let (h, w, _) = eps.dim();
    if latent_mask.dims() != (h, w) {
        return Err(Error::DimMismatch {
            left: latent_mask.dims(),
            right: (h, w),
        });
    }
    let n = latent_mask.count();
    if n == 0 {
        return Err(Error::Empty("region loss needs a non-empty mask"));
    }
    Ok(n * eps.dim().2)
}

/// Masked mean squared error.
pub fn region_loss(eps: &Array3<f64>, eps_hat: &Array3<f64>, latent_mask: &SemanticMask) -> Result<f64> {
    Ok(region_loss_with_grad(eps, eps_hat, latent_mask)?.0)
}

/// Loss and its gradient with respect to `eps_hat`.
pub fn region_loss_with_grad(
    eps: &Array3<f64>,
    eps_hat: &Array3<f64>,
    latent_mask: &SemanticMask,
) -> Result<(f64, Array3<f64>)> {
    let n = check(eps, eps_hat, latent_mask)? as f64;
    let (h, w, c) = eps.dim();
    let mut grad = Array3::zeros((h, w, c));
    let mut sum = 0.0;
    for i in 0..h {
        for j in 0..w {
            if !latent_mask.get(i, j) {
                continue;
            }
            for k in 0..c {
                let d = eps_hat[[i, j, k]] - eps[[i, j, k]];
                sum += d * d;
                grad[[i, j, k]] = 2.0 * d / n;
            }
        }
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mask_is_global_mse() {
        let a = Array3::from_shape_fn((3, 4, 5), |(i, j, k)| (i * 7 + j * 3 + k) as f64 * 0.13 - 1.0);
        let b = Array3::from_shape_fn((3, 4, 5), |(i, j, k)| ((i + j * k) % 5) as f64 * 0.21);
        let mse = (&a - &b).mapv(|d| d * d).mean().unwrap();
        let l = region_loss(&a, &b, &SemanticMask::ones(3, 4)).unwrap();
        assert!(((l - mse) / mse).abs() <= 1e-12);
    }

    #[test]
    fn identical_is_zero_and_empty_is_error() {
        let a = Array3::from_elem((2, 2, 3), 0.4);
        assert_eq!(region_loss(&a, &a, &SemanticMask::ones(2, 2)).unwrap(), 0.0);
        assert!(region_loss(&a, &a, &SemanticMask::zeros(2, 2)).is_err());
    }

    #[test]
    fn half_mask_difference_of_two() {
        let eps = Array3::zeros((2, 4, 3));
        let mut hat = Array3::zeros((2, 4, 3));
        let mut mask = SemanticMask::zeros(2, 4);
        for i in 0..2 {
            for j in 0..2 {
                mask.set(i, j, true);
                for k in 0..3 {
                    hat[[i, j, k]] = 2.0;
                }
            }
            for j in 2..4 {
                for k in 0..3 {
                    hat[[i, j, k]] = -9.0;
                }
            }
        }
        assert_eq!(region_loss(&eps, &hat, &mask).unwrap(), 4.0);
    }
}
