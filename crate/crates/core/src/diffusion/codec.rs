//! Fixed latent codec: lossless 4x4 space-to-depth.
//!
//! `encode` folds every `4 x 4` pixel block into the channel axis, so an
//! `H x W x 2` image becomes an `H/4 x W/4 x 32` latent. `decode` is its exact
//! inverse. Channel `k` of a latent cell holds pixel `(dy, dx)` of the block,
//! image channel `ch`, with `k = (dy * 4 + dx) * C + ch`.

use ndarray::Array3;

use crate::error::{Error, Result};

/// Side of the pixel block folded into one latent cell.
pub const BLOCK: usize = 4;

/// `h x w x c` latent grid.
pub type Latent = Array3<f64>;

pub fn encode(x: &Array3<f64>) -> Result<Latent> {
    let (h, w, c) = x.dim();
    if h % BLOCK != 0 || w % BLOCK != 0 || h == 0 || w == 0 {
        return Err(Error::NotDivisible {
            dims: (h, w),
            factors: (BLOCK, BLOCK),
        });
    }
    let mut z = Array3::zeros((h / BLOCK, w / BLOCK, BLOCK * BLOCK * c));
    for ((r, col, ch), v) in x.indexed_iter() {
        let k = ((r % BLOCK) * BLOCK + col % BLOCK) * c + ch;
        z[[r / BLOCK, col / BLOCK, k]] = *v;
    }
    Ok(z)
}

/// Inverse of [`encode`] for an image with `channels` channels.
pub fn decode(z: &Latent, channels: usize) -> Result<Array3<f64>> {
    let (h, w, k) = z.dim();
    if channels == 0 || k != BLOCK * BLOCK * channels {
        return Err(Error::ShapeMismatch {
            left: vec![h, w, k],
            right: vec![h, w, BLOCK * BLOCK * channels],
        });
    }
    let mut x = Array3::zeros((h * BLOCK, w * BLOCK, channels));
    for ((i, j, kk), v) in z.indexed_iter() {
        let ch = kk % channels;
        let cell = kk / channels;
        x[[i * BLOCK + cell / BLOCK, j * BLOCK + cell % BLOCK, ch]] = *v;
    }
    Ok(x)
}
