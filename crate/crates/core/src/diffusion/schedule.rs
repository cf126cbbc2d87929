use ndarray::{Array4, Zip};
use serde::{Deserialize, Serialize};

use crate::latent_codec::LatentVideo;
use crate::{Error, Result};

/// Linear-β schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(default = "default_steps")]
    pub num_timesteps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
}

fn default_steps() -> usize {
    1000
}

fn default_beta_start() -> f64 {
    1e-4
}

fn default_beta_end() -> f64 {
    2e-2
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            num_timesteps: default_steps(),
            beta_start: default_beta_start(),
            beta_end: default_beta_end(),
        }
    }
}

/// Variance schedule `β_t` with cumulative products `ᾱ_t = ∏_{s≤t} (1 − β_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        Self::linear(cfg.num_timesteps, cfg.beta_start, cfg.beta_end)
    }

    pub fn linear(num_timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_timesteps == 0 {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        let betas = if num_timesteps == 1 {
            vec![beta_start]
        } else {
            let step = (beta_end - beta_start) / (num_timesteps - 1) as f64;
            (0..num_timesteps).map(|i| beta_start + step * i as f64).collect()
        };
        Self::from_betas(betas)
    }

    /// β must be nondecreasing in `[0, 1)`. A leading `β = 0` is allowed so
    /// that `ᾱ_0 = 1` exactly.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("betas must be nondecreasing".into()));
        }
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self { betas, alpha_bars })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::Contract(format!("timestep {t} outside schedule of {} steps", self.len())));
        }
        Ok(())
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.alpha_bars[t])
    }
}

/// Closed-form forward diffusion `z_t = √ᾱ_t z_0 + √(1 − ᾱ_t) ε`.
pub fn q_sample_array(schedule: &NoiseSchedule, z0: &Array4<f64>, t: usize, noise: &Array4<f64>) -> Result<Array4<f64>> {
    let ab = schedule.alpha_bar(t)?;
    if z0.dim() != noise.dim() {
        return Err(Error::Alignment(format!("latent {:?} vs noise {:?}", z0.dim(), noise.dim())));
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut out = Array4::zeros(z0.dim());
    Zip::from(&mut out)
        .and(z0)
        .and(noise)
        .for_each(|o, &z, &e| *o = a * z + b * e);
    Ok(out)
}

pub fn q_sample(schedule: &NoiseSchedule, z0: &LatentVideo, t: usize, noise: &LatentVideo) -> Result<LatentVideo> {
    z0.with_data(q_sample_array(schedule, z0.data(), t, noise.data())?)
}
