//! Mask-conditioned noise estimator.
//!
//! A four-block dilated 3x3 convolutional network over the latent grid. The input
//! concatenates, along channels, the noisy latent `z_t`, the encoded masked
//! image and the latent mask. A sinusoidal timestep embedding is projected
//! per block and added to the pre-activations of the first three blocks:
//!
//! ```text
//! a1 = conv1(x)  + T1 e_t     h1 = silu(a1)
//! a2 = conv2(h1) + T2 e_t     h2 = h1 + silu(a2)
//! a3 = conv3(h2) + T3 e_t     h3 = h2 + silu(a3)
//! out = conv4(h3) + b4
//! ```
//!
//! Activations are `positions x channels` matrices in row-major position
//! order, and convolutions run as im2col followed by one matrix product.
//! Gradients are computed by hand.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::SemanticMask;

use super::codec::Latent;

const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Network hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    /// Channels of `z_t`; also the channels of the encoded masked image and
    /// of the output.
    pub latent_channels: usize,
    /// Hidden channel width.
    pub width: usize,
    /// Sinusoidal embedding size, must be even.
    pub time_dim: usize,
    pub dilations: Dilations,
}

/// Dilation of each of the four convolutions. Growing dilations let the
/// middle of a wide mask see the known pixels around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dilations(pub [usize; 4]);

impl Default for Dilations {
    fn default() -> Self {
        Dilations([1, 2, 4, 8])
    }
}

impl Dilations {
    /// Cells seen on each side of an output cell.
    pub fn reach(&self) -> usize {
        self.0.iter().sum()
    }
}

impl std::str::FromStr for Dilations {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("dilations must be four positive integers, got {s:?}"));
        let v: Vec<usize> = s
            .split(',')
            .map(|f| f.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let d: [usize; 4] = v.try_into().map_err(|_| bad())?;
        if d.contains(&0) {
            return Err(bad());
        }
        Ok(Dilations(d))
    }
}

impl std::fmt::Display for Dilations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            latent_channels: 32,
            width: 64,
            time_dim: 128,
            dilations: Dilations::default(),
        }
    }
}

impl DenoiserConfig {
    /// `z_t`, encoded masked image, latent mask.
    pub fn input_channels(&self) -> usize {
        2 * self.latent_channels + 1
    }

    /// Names and `(rows, cols)` shapes of every parameter tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, (usize, usize))> {
        let (c, w, e) = (self.latent_channels, self.width, self.time_dim);
        vec![
            ("conv1.weight", (TAPS * self.input_channels(), w)),
            ("time1.weight", (e, w)),
            ("time1.bias", (1, w)),
            ("conv2.weight", (TAPS * w, w)),
            ("time2.weight", (e, w)),
            ("time2.bias", (1, w)),
            ("conv3.weight", (TAPS * w, w)),
            ("time3.weight", (e, w)),
            ("time3.bias", (1, w)),
            ("conv4.weight", (TAPS * w, c)),
            ("conv4.bias", (1, c)),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, (r, c))| r * c).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_channels == 0
            || self.width == 0
            || self.time_dim == 0
            || !self.time_dim.is_multiple_of(2)
            || self.dilations.0.contains(&0)
        {
            return Err(Error::InvalidConfig(format!("bad denoiser config {self:?}")));
        }
        Ok(())
    }
}

mod idx {
    pub const CONV1: usize = 0;
    pub const TIME1: usize = 1;
    pub const CONV2: usize = 3;
    pub const TIME2: usize = 4;
    pub const CONV3: usize = 6;
    pub const TIME3: usize = 7;
    pub const CONV4: usize = 9;
    pub const BIAS4: usize = 10;
}

/// Parameter tensors (or gradients of the same layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<Array2<f64>>,
}

impl Params {
    pub fn zeros(cfg: &DenoiserConfig) -> Self {
        Params {
            tensors: cfg
                .parameter_shapes()
                .into_iter()
                .map(|(_, shape)| Array2::zeros(shape))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.tensors {
            *a *= k;
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view into parameter `index` counting across tensors in order.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in &self.tensors {
            if index < t.len() {
                return t.as_slice().expect("standard layout")[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in &mut self.tensors {
            if index < t.len() {
                t.as_slice_mut().expect("standard layout")[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }
}

/// Sinusoidal embedding: `sin(t f_i)` then `cos(t f_i)`, with
/// `f_i = 10000^(-i / (dim / 2))`.
pub fn timestep_embedding(t: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut e = Array1::zeros(dim);
    for i in 0..half {
        let f = (-(10000f64).ln() * i as f64 / half as f64).exp();
        e[i] = (t * f).sin();
        e[half + i] = (t * f).cos();
    }
    e
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

fn tap_source(i: usize, j: usize, tap: usize, d: usize, h: usize, w: usize) -> Option<usize> {
    let si = i as isize + ((tap / 3) as isize - 1) * d as isize;
    let sj = j as isize + ((tap % 3) as isize - 1) * d as isize;
    (si >= 0 && sj >= 0 && si < h as isize && sj < w as isize).then(|| si as usize * w + sj as usize)
}

/// Dilated 3x3 zero-padded neighborhoods, `(h*w) x (9*C)`; column block
/// `tap * C` holds the input at offset `d * (tap / 3 - 1, tap % 3 - 1)`.
fn im2col(x: &ArrayView2<f64>, h: usize, w: usize, d: usize) -> Array2<f64> {
    let c = x.ncols();
    let mut cols = Array2::zeros((h * w, TAPS * c));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            for tap in 0..TAPS {
                let Some(q) = tap_source(i, j, tap, d, h, w) else {
                    continue;
                };
                let dst = p * TAPS * c + tap * c;
                cs[dst..dst + c].copy_from_slice(&xs[q * c..q * c + c]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &Array2<f64>, h: usize, w: usize, c: usize, d: usize) -> Array2<f64> {
    let mut x = Array2::zeros((h * w, c));
    let xs = x.as_slice_mut().expect("standard layout");
    let cs = cols.as_slice().expect("standard layout");
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            for tap in 0..TAPS {
                let Some(q) = tap_source(i, j, tap, d, h, w) else {
                    continue;
                };
                let src = p * TAPS * c + tap * c;
                for k in 0..c {
                    xs[q * c + k] += cs[src + k];
                }
            }
        }
    }
    x
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    h: usize,
    w: usize,
    embedding: Array1<f64>,
    cols1: Array2<f64>,
    a1: Array2<f64>,
    cols2: Array2<f64>,
    a2: Array2<f64>,
    cols3: Array2<f64>,
    a3: Array2<f64>,
    cols4: Array2<f64>,
}

/// The trainable noise estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: Params,
}

impl Denoiser {
    /// Scaled-normal initialization, deterministic in `seed`.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&config);
        for (k, (name, (rows, _))) in config.parameter_shapes().into_iter().enumerate() {
            let std = match name {
                "conv1.weight" => (2.0 / rows as f64).sqrt(),
                "conv2.weight" | "conv3.weight" => 0.5 * (2.0 / rows as f64).sqrt(),
                "conv4.weight" => 0.1 * (1.0 / rows as f64).sqrt(),
                n if n.starts_with("time") && n.ends_with("weight") => (1.0 / rows as f64).sqrt(),
                _ => 0.0,
            };
            if std > 0.0 {
                params.tensors[k].mapv_inplace(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    std * v
                });
            }
        }
        Ok(Denoiser { config, params })
    }

    pub fn from_params(config: DenoiserConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if params.tensors.len() != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                params.tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&params.tensors) {
            if t.dim() != *shape {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.dim()
                )));
            }
        }
        Ok(Denoiser { config, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Channel concatenation of `z_t`, encoded masked image and latent mask
    /// as a `positions x channels` matrix.
    pub fn assemble_input(&self, z_t: &Latent, cond: &Latent, latent_mask: &SemanticMask) -> Result<Array2<f64>> {
        let (h, w, c) = z_t.dim();
        if c != self.config.latent_channels || cond.dim() != z_t.dim() {
            return Err(Error::ShapeMismatch {
                left: z_t.shape().to_vec(),
                right: cond.shape().to_vec(),
            });
        }
        if latent_mask.dims() != (h, w) {
            return Err(Error::DimMismatch {
                left: latent_mask.dims(),
                right: (h, w),
            });
        }
        let cin = self.config.input_channels();
        let mut x = Array2::zeros((h * w, cin));
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let mut row = x.row_mut(p);
                row.slice_mut(s![..c]).assign(&z_t.slice(s![i, j, ..]));
                row.slice_mut(s![c..2 * c]).assign(&cond.slice(s![i, j, ..]));
                row[2 * c] = if latent_mask.get(i, j) { 1.0 } else { 0.0 };
            }
        }
        Ok(x)
    }

    /// Predicted noise for `z_t` at step `t`.
    pub fn predict(&self, z_t: &Latent, t: usize, cond: &Latent, latent_mask: &SemanticMask) -> Result<Latent> {
        Ok(self.forward(z_t, t, cond, latent_mask)?.0)
    }

    pub fn forward(
        &self,
        z_t: &Latent,
        t: usize,
        cond: &Latent,
        latent_mask: &SemanticMask,
    ) -> Result<(Latent, ForwardCache)> {
        let (h, w, c) = z_t.dim();
        let x = self.assemble_input(z_t, cond, latent_mask)?;
        let p = &self.params.tensors;
        let embedding = timestep_embedding(t as f64, self.config.time_dim);
        let temb = |k: usize| embedding.dot(&p[k]) + p[k + 1].row(0);

        let [d1, d2, d3, d4] = self.config.dilations.0;
        let cols1 = im2col(&x.view(), h, w, d1);
        let a1 = cols1.dot(&p[idx::CONV1]) + temb(idx::TIME1);
        let h1 = a1.mapv(silu);

        let cols2 = im2col(&h1.view(), h, w, d2);
        let a2 = cols2.dot(&p[idx::CONV2]) + temb(idx::TIME2);
        let h2 = &h1 + &a2.mapv(silu);

        let cols3 = im2col(&h2.view(), h, w, d3);
        let a3 = cols3.dot(&p[idx::CONV3]) + temb(idx::TIME3);
        let h3 = &h2 + &a3.mapv(silu);

        let cols4 = im2col(&h3.view(), h, w, d4);
        let out = cols4.dot(&p[idx::CONV4]) + p[idx::BIAS4].row(0);
        let out = out.into_shape_with_order((h, w, c)).expect("output shape");
        Ok((
            out,
            ForwardCache {
                h,
                w,
                embedding,
                cols1,
                a1,
                cols2,
                a2,
                cols3,
                a3,
                cols4,
            },
        ))
    }

    /// Parameter gradients given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Latent) -> Params {
        let (h, w) = (cache.h, cache.w);
        let width = self.config.width;
        let p = &self.params.tensors;
        let mut g = Params::zeros(&self.config);
        let dout = grad_out
            .to_owned()
            .into_shape_with_order((h * w, self.config.latent_channels))
            .expect("grad shape");

        g.tensors[idx::CONV4] = cache.cols4.t().dot(&dout);
        g.tensors[idx::BIAS4] = dout.sum_axis(Axis(0)).insert_axis(Axis(0));
        let [_, d2, d3, d4] = self.config.dilations.0;
        let mut dh = col2im(&dout.dot(&p[idx::CONV4].t()), h, w, width, d4);

        let time_grads = |g: &mut Params, da: &Array2<f64>, k: usize, e: &Array1<f64>| {
            let colsum = da.sum_axis(Axis(0));
            g.tensors[k] = e.view().insert_axis(Axis(1)).dot(&colsum.view().insert_axis(Axis(0)));
            g.tensors[k + 1] = colsum.insert_axis(Axis(0));
        };

        // residual blocks 3 and 2
        for (conv, time, cols, a, d) in [
            (idx::CONV3, idx::TIME3, &cache.cols3, &cache.a3, d3),
            (idx::CONV2, idx::TIME2, &cache.cols2, &cache.a2, d2),
        ] {
            let mut da = a.mapv(silu_grad);
            da *= &dh;
            g.tensors[conv] = cols.t().dot(&da);
            time_grads(&mut g, &da, time, &cache.embedding);
            dh += &col2im(&da.dot(&p[conv].t()), h, w, width, d);
        }

        let mut da1 = cache.a1.mapv(silu_grad);
        da1 *= &dh;
        g.tensors[idx::CONV1] = cache.cols1.t().dot(&da1);
        time_grads(&mut g, &da1, idx::TIME1, &cache.embedding);
        // transposed products come back column-major
        for t in &mut g.tensors {
            if !t.is_standard_layout() {
                *t = t.as_standard_layout().into_owned();
            }
        }
        g
    }

    /// Plain gradient step.
    pub fn sgd_step(&mut self, grads: &Params, lr: f64) {
        for (p, g) in self.params.tensors.iter_mut().zip(&grads.tensors) {
            p.scaled_add(-lr, g);
        }
    }
}

/// Reshapes a `positions x channels` matrix into a latent grid.
pub fn to_latent(m: Array2<f64>, h: usize, w: usize) -> Latent {
    let c = m.ncols();
    m.into_shape_with_order((h, w, c)).expect("latent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;

    fn random_latent(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Latent {
        Array3::from_shape_fn((h, w, c), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn dilations_parse_and_print() {
        let d: Dilations = "1, 2,4,8".parse().unwrap();
        assert_eq!(d, Dilations::default());
        assert_eq!(d.to_string().parse::<Dilations>().unwrap(), d);
        assert_eq!(d.reach(), 15);
        for bad in ["1,2,4", "1,2,4,8,16", "0,1,1,1", "a,b,c,d"] {
            assert!(bad.parse::<Dilations>().is_err(), "{bad}");
        }
    }

    #[test]
    fn parameter_count_is_deterministic() {
        let cfg = DenoiserConfig::default();
        // conv1 9*65*64, time 3*(128*64+64), conv2/3 9*64*64, conv4 9*64*32+32
        let expected = 9 * 65 * 64 + 3 * (128 * 64 + 64) + 2 * 9 * 64 * 64 + 9 * 64 * 32 + 32;
        assert_eq!(cfg.parameter_count(), expected);
        assert_eq!(Denoiser::new(cfg, 0).unwrap().parameter_count(), expected);
    }

    #[test]
    fn output_shape_matches_input() {
        let cfg = DenoiserConfig {
            latent_channels: 4,
            width: 8,
            time_dim: 6,
            ..DenoiserConfig::default()
        };
        let m = Denoiser::new(cfg, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = random_latent(&mut rng, 3, 5, 4);
        let c = random_latent(&mut rng, 3, 5, 4);
        let out = m.predict(&z, 7, &c, &SemanticMask::ones(3, 5)).unwrap();
        assert_eq!(out.dim(), z.dim());
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (h, w, c) = (4, 5, 3);
        for d in 1..=4 {
            let x = Array2::from_shape_fn((h * w, c), |_| rng.random::<f64>());
            let y = Array2::from_shape_fn((h * w, TAPS * c), |_| rng.random::<f64>());
            let lhs = (&im2col(&x.view(), h, w, d) * &y).sum();
            let rhs = (&x * &col2im(&y, h, w, c, d)).sum();
            assert!((lhs - rhs).abs() < 1e-10, "dilation {d}");
        }
    }

    #[test]
    fn dilated_taps_reach_their_offsets() {
        let x = Array2::from_shape_fn((5 * 5, 1), |(p, _)| p as f64);
        let cols = im2col(&x.view(), 5, 5, 2);
        // center pixel (2, 2): taps at rows/cols 0, 2, 4
        let row = cols.row(12).to_vec();
        assert_eq!(row, vec![0.0, 2.0, 4.0, 10.0, 12.0, 14.0, 20.0, 22.0, 24.0]);
        // corner (0, 0): only the center, right, down and diagonal taps exist
        let row = cols.row(0).to_vec();
        assert_eq!(row, vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 10.0, 12.0]);
    }

    #[test]
    fn gradients_match_finite_differences_small_net() {
        let cfg = DenoiserConfig {
            latent_channels: 3,
            width: 5,
            time_dim: 4,
            dilations: Dilations([1, 2, 3, 2]),
        };
        let mut m = Denoiser::new(cfg, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_latent(&mut rng, 4, 5, 3);
        let c = random_latent(&mut rng, 4, 5, 3);
        let target = random_latent(&mut rng, 4, 5, 3);
        let mask = SemanticMask::from_bits(4, 5, (0..20).map(|i| i % 3 != 0).collect()).unwrap();
        let loss = |m: &Denoiser| {
            let out = m.predict(&z, 11, &c, &mask).unwrap();
            super::super::loss::region_loss(&target, &out, &mask).unwrap()
        };
        let (out, cache) = m.forward(&z, 11, &c, &mask).unwrap();
        let (_, gout) = super::super::loss::region_loss_with_grad(&target, &out, &mask).unwrap();
        let grads = m.backward(&cache, &gout);
        for i in 0..m.params().len() {
            let orig = m.params().get_flat(i);
            m.params_mut().set_flat(i, orig + 1e-5);
            let up = loss(&m);
            m.params_mut().set_flat(i, orig - 1e-5);
            let down = loss(&m);
            m.params_mut().set_flat(i, orig);
            let fd = (up - down) / 2e-5;
            let an = grads.get_flat(i);
            assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                "param {i}: fd {fd} analytic {an}"
            );
        }
    }
}
