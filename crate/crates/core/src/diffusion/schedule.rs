//! Linear variance schedule.

use crate::error::{Error, Result};

/// `betas[t-1]` is the noise variance added at step `t` (steps are 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation from `beta_1` to `beta_t` over `steps >= 2` steps.
    pub fn linear(steps: usize, beta_1: f64, beta_t: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        if !(beta_1 > 0.0 && beta_1 <= beta_t && beta_t < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < beta_1 <= beta_T < 1, got {beta_1} and {beta_t}"
            )));
        }
        let betas = (0..steps)
            .map(|i| beta_1 + (beta_t - beta_1) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    /// Arbitrary betas in `(0, 1)`; a single step is allowed here.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidConfig("empty schedule".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidConfig(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::BadTimestep { t, steps: self.steps() });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.check(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alphas[self.check(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.check(t)?])
    }

    /// `alpha_bar(t - 1)` with `alpha_bar(0) = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> Result<f64> {
        let i = self.check(t)?;
        Ok(if i == 0 { 1.0 } else { self.alpha_bars[i - 1] })
    }

    /// Variance of the reverse-process posterior `q(z_{t-1} | z_t, z_0)`.
    pub fn posterior_variance(&self, t: usize) -> Result<f64> {
        let ab = self.alpha_bar(t)?;
        Ok(self.beta(t)? * (1.0 - self.alpha_bar_prev(t)?) / (1.0 - ab))
    }
}
