//! Training triples and the optimization loop.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{RangeImage, SemanticMask};
use crate::kv::KeyValues;
use crate::mask::{apply_mask, downsample_mask};
use crate::projection::ProjectionConfig;

use super::codec::{encode, Latent, BLOCK};
use super::denoiser::{Denoiser, DenoiserConfig, Dilations, Params};
use super::loss::region_loss_with_grad;
use super::schedule::NoiseSchedule;
use super::{forward_diffuse, normalize_image};

/// Image, edit mask and the image with the mask applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub x: RangeImage,
    pub mask: SemanticMask,
    pub x_m: RangeImage,
}

impl TrainExample {
    pub fn new(x: RangeImage, mask: SemanticMask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::Empty("training example needs a non-empty mask"));
        }
        let x_m = apply_mask(&x, &mask)?;
        Ok(TrainExample { x, mask, x_m })
    }

    /// Normalizes and encodes the image pair and pools the mask.
    pub fn to_latent(&self, cfg: &ProjectionConfig) -> Result<LatentExample> {
        Ok(LatentExample {
            z0: encode(&normalize_image(&self.x, cfg)?)?,
            cond: encode(&normalize_image(&self.x_m, cfg)?)?,
            latent_mask: downsample_mask(&self.mask, BLOCK, BLOCK)?,
        })
    }
}

/// A training triple in latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentExample {
    pub z0: Latent,
    pub cond: Latent,
    pub latent_mask: SemanticMask,
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain momentumless SGD.
    Sgd,
    /// Adam with betas 0.9 / 0.999 and epsilon 1e-8.
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer {s:?}"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        })
    }
}

/// Flat key-value training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps_t: usize,
    pub beta_1: f64,
    pub beta_t: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub crop_h: usize,
    pub crop_w: usize,
    pub width: usize,
    pub time_dim: usize,
    pub dilations: Dilations,
    /// Restrict the loss to the latent mask; `false` trains on every cell.
    pub region_loss: bool,
    pub optimizer: Optimizer,
    /// Heavy-ball momentum for SGD; 0 is plain SGD. Ignored by Adam.
    pub momentum: f64,
    /// Decay of the exponential moving average of the weights used for
    /// sampling; 0 samples with the raw weights.
    pub ema: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps_t: 1000,
            beta_1: 1e-4,
            beta_t: 0.02,
            lr: 1e-4,
            steps: 2000,
            batch: 4,
            seed: 0,
            crop_h: 32,
            crop_w: 256,
            width: 64,
            time_dim: 128,
            dilations: Dilations::default(),
            region_loss: true,
            optimizer: Optimizer::Sgd,
            momentum: 0.0,
            ema: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps_t, self.beta_1, self.beta_t)
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            latent_channels: 2 * BLOCK * BLOCK,
            width: self.width,
            time_dim: self.time_dim,
            dilations: self.dilations,
        }
    }

    /// Parses a configuration; missing keys take defaults, unknown keys
    /// are rejected.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        const KEYS: [&str; 16] = [
            "T",
            "beta_1",
            "beta_T",
            "lr",
            "steps",
            "batch",
            "seed",
            "crop_h",
            "crop_w",
            "width",
            "time_dim",
            "dilations",
            "region_loss",
            "optimizer",
            "momentum",
            "ema",
        ];
        if let Some((k, _)) = kv.pairs().iter().find(|(k, _)| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown training key {k:?}")));
        }
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            steps_t: kv.get_or("T", d.steps_t)?,
            beta_1: kv.get_or("beta_1", d.beta_1)?,
            beta_t: kv.get_or("beta_T", d.beta_t)?,
            lr: kv.get_or("lr", d.lr)?,
            steps: kv.get_or("steps", d.steps)?,
            batch: kv.get_or("batch", d.batch)?,
            seed: kv.get_or("seed", d.seed)?,
            crop_h: kv.get_or("crop_h", d.crop_h)?,
            crop_w: kv.get_or("crop_w", d.crop_w)?,
            width: kv.get_or("width", d.width)?,
            time_dim: kv.get_or("time_dim", d.time_dim)?,
            dilations: kv.get_or("dilations", d.dilations)?,
            region_loss: kv.get_or("region_loss", d.region_loss)?,
            optimizer: kv.get_or("optimizer", d.optimizer)?,
            momentum: kv.get_or("momentum", d.momentum)?,
            ema: kv.get_or("ema", d.ema)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.denoiser_config().validate()?;
        if self.batch == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("batch and lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.ema) {
            return Err(Error::InvalidConfig(format!("ema decay {} outside [0, 1)", self.ema)));
        }
        if self.crop_h == 0
            || self.crop_w == 0
            || !self.crop_h.is_multiple_of(BLOCK)
            || !self.crop_w.is_multiple_of(BLOCK)
        {
            return Err(Error::InvalidConfig(format!(
                "crop {}x{} must be a positive multiple of {BLOCK}",
                self.crop_h, self.crop_w
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "T = {}", self.steps_t);
        let _ = writeln!(s, "beta_1 = {}", self.beta_1);
        let _ = writeln!(s, "beta_T = {}", self.beta_t);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "crop_h = {}", self.crop_h);
        let _ = writeln!(s, "crop_w = {}", self.crop_w);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "time_dim = {}", self.time_dim);
        let _ = writeln!(s, "dilations = {}", self.dilations);
        let _ = writeln!(s, "region_loss = {}", self.region_loss);
        let _ = writeln!(s, "optimizer = {}", self.optimizer);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "ema = {}", self.ema);
        s
    }
}

pub(crate) fn gaussian_latent(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Latent {
    Array3::from_shape_simple_fn(dim, || StandardNormal.sample(rng))
}

/// Loss and gradient of one example at a fixed `t` and noise draw.
pub fn example_loss_and_grad(
    model: &Denoiser,
    ex: &LatentExample,
    t: usize,
    eps: &Latent,
    sched: &NoiseSchedule,
    region_loss: bool,
) -> Result<(f64, Params)> {
    let z_t = forward_diffuse(&ex.z0, t, eps, sched)?;
    let (eps_hat, cache) = model.forward(&z_t, t, &ex.cond, &ex.latent_mask)?;
    let full;
    let loss_mask = if region_loss {
        &ex.latent_mask
    } else {
        full = SemanticMask::ones(ex.latent_mask.height(), ex.latent_mask.width());
        &full
    };
    let (loss, gout) = region_loss_with_grad(eps, &eps_hat, loss_mask)?;
    Ok((loss, model.backward(&cache, &gout)))
}

/// Mean loss and gradient over `batch`. Per example, draws `t ~ U{1..T}`
/// then a unit Gaussian `eps` from `rng` in batch order; examples are
/// evaluated in parallel and reduced in batch order.
pub fn batch_gradient(
    model: &Denoiser,
    batch: &[&LatentExample],
    sched: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
    region_loss: bool,
) -> Result<(f64, Params)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let draws: Vec<(usize, Latent)> = batch
        .iter()
        .map(|ex| {
            let t = rng.random_range(1..=sched.steps());
            (t, gaussian_latent(rng, ex.z0.dim()))
        })
        .collect();
    let results: Vec<(f64, Params)> = batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(ex, (t, eps))| example_loss_and_grad(model, ex, *t, eps, sched, region_loss))
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let mut grads = Params::zeros(model.config());
    let mut loss = 0.0;
    for (l, g) in &results {
        loss += l;
        grads.add_assign(g);
    }
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// One plain SGD step on `batch`; see [`batch_gradient`] for the draws.
/// Returns the mean batch loss.
pub fn train_step(
    model: &mut Denoiser,
    batch: &[&LatentExample],
    sched: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
    lr: f64,
    region_loss: bool,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(model, batch, sched, rng, region_loss)?;
    model.sgd_step(&grads, lr);
    Ok(loss)
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone)]
struct AdamState {
    m: Params,
    v: Params,
    steps: i32,
}

impl AdamState {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.steps += 1;
        let c1 = 1.0 - Self::B1.powi(self.steps);
        let c2 = 1.0 - Self::B2.powi(self.steps);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            });
        }
    }
}

/// Owns the model, optimizer state, schedule and random stream for a
/// training run.
pub struct Trainer {
    pub model: Denoiser,
    pub schedule: NoiseSchedule,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    losses: Vec<f64>,
    adam: Option<AdamState>,
    velocity: Option<Params>,
    ema: Option<Params>,
}

impl Trainer {
    /// Model initialized from `config.seed`; the data stream uses a seed
    /// derived from it.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Denoiser::new(config.denoiser_config(), config.seed)?;
        let schedule = config.schedule()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_da7a);
        let adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
            m: Params::zeros(model.config()),
            v: Params::zeros(model.config()),
            steps: 0,
        });
        let velocity =
            (config.optimizer == Optimizer::Sgd && config.momentum > 0.0).then(|| Params::zeros(model.config()));
        let ema = (config.ema > 0.0).then(|| model.params().clone());
        Ok(Trainer {
            model,
            schedule,
            config,
            rng,
            losses: Vec::new(),
            adam,
            velocity,
            ema,
        })
    }

    /// The weights to sample with: the moving average when enabled,
    /// otherwise the current weights.
    pub fn sampling_model(&self) -> Denoiser {
        match &self.ema {
            Some(p) => Denoiser::from_params(*self.model.config(), p.clone()).expect("same layout"),
            None => self.model.clone(),
        }
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// One step on a batch drawn uniformly with replacement from `data`.
    pub fn step(&mut self, data: &[LatentExample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let picks: Vec<&LatentExample> = (0..self.config.batch)
            .map(|_| &data[self.rng.random_range(0..data.len())])
            .collect();
        let (loss, grads) = batch_gradient(
            &self.model,
            &picks,
            &self.schedule,
            &mut self.rng,
            self.config.region_loss,
        )?;
        match (&mut self.adam, &mut self.velocity) {
            (Some(adam), _) => adam.step(self.model.params_mut(), &grads, self.config.lr),
            (None, Some(v)) => {
                v.scale(self.config.momentum);
                v.add_assign(&grads);
                self.model.sgd_step(v, self.config.lr);
            }
            (None, None) => self.model.sgd_step(&grads, self.config.lr),
        }
        if let Some(ema) = &mut self.ema {
            let d = self.config.ema;
            ema.scale(d);
            let mut current = self.model.params().clone();
            current.scale(1.0 - d);
            ema.add_assign(&current);
        }
        self.losses.push(loss);
        Ok(loss)
    }

    /// Runs `config.steps` steps, calling `progress(step, loss)` after each.
    pub fn run(&mut self, data: &[LatentExample], mut progress: impl FnMut(usize, f64)) -> Result<()> {
        for i in 0..self.config.steps {
            let loss = self.step(data)?;
            progress(i + 1, loss);
        }
        Ok(())
    }
}
