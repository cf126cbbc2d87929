use candle_core::Tensor;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::conditioning::ConditionBundle;
use crate::dit::DiT;
use crate::latent_codec::{fuse_inputs, LatentMask, LatentVideo};
use crate::tensor::{to_array4, to_tensor};
use crate::{Error, Result};

/// Anything that predicts noise from a fused latent and a condition bundle.
pub trait NoisePredictor {
    fn predict_noise(&self, fused: &Tensor, cond: &ConditionBundle) -> Result<Tensor>;
}

impl NoisePredictor for DiT {
    fn predict_noise(&self, fused: &Tensor, cond: &ConditionBundle) -> Result<Tensor> {
        self.forward(fused, cond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub seed: u64,
    /// Multiplier on the injected posterior noise; `0` gives the mean chain.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Classifier-free guidance weight; `None` disables guidance.
    #[serde(default)]
    pub guidance: Option<f64>,
    /// Before each step, overwrite latent positions with `m_z = 0` by the
    /// known latent noised to the current level, and by the known latent
    /// itself at the end. Keeps the unsupervised region on the training
    /// distribution.
    #[serde(default = "yes")]
    pub resample_known: bool,
}

fn yes() -> bool {
    true
}

fn default_noise_scale() -> f64 {
    1.0
}

impl SamplerConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            seed,
            noise_scale: 1.0,
            guidance: None,
            resample_known: true,
        }
    }
}

/// `steps` timesteps, evenly spaced from `T − 1` down to `0`.
pub fn timestep_sequence(num_timesteps: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > num_timesteps {
        return Err(Error::Config(format!(
            "sampler steps must be in 1..={num_timesteps}, got {steps}"
        )));
    }
    if steps == 1 {
        return Ok(vec![num_timesteps - 1]);
    }
    let last = (num_timesteps - 1) as f64;
    let mut seq: Vec<usize> = (0..steps)
        .map(|i| (last - last * i as f64 / (steps - 1) as f64).round() as usize)
        .collect();
    seq.dedup();
    Ok(seq)
}

/// Coefficients of one ancestral step from `t` to the previous kept timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorStep {
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
    /// Weight of the `x_0` estimate in the posterior mean.
    pub coef_x0: f64,
    /// Weight of `z_t` in the posterior mean.
    pub coef_zt: f64,
    pub variance: f64,
}

impl PosteriorStep {
    pub fn new(alpha_bar: f64, alpha_bar_prev: f64) -> Self {
        let beta = 1.0 - alpha_bar / alpha_bar_prev;
        let denom = 1.0 - alpha_bar;
        Self {
            alpha_bar,
            alpha_bar_prev,
            coef_x0: alpha_bar_prev.sqrt() * beta / denom,
            coef_zt: (1.0 - beta).sqrt() * (1.0 - alpha_bar_prev) / denom,
            variance: beta * (1.0 - alpha_bar_prev) / denom,
        }
    }

    /// `x_0 = (z_t − √(1 − ᾱ_t) ε̂) / √ᾱ_t`.
    pub fn predict_x0(&self, z: f64, eps: f64) -> f64 {
        (z - (1.0 - self.alpha_bar).sqrt() * eps) / self.alpha_bar.sqrt()
    }

    pub fn mean(&self, z: f64, eps: f64) -> f64 {
        self.coef_x0 * self.predict_x0(z, eps) + self.coef_zt * z
    }
}

fn standard_normal(dims: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f64> {
    Array4::from_shape_simple_fn(dims, || rng.sample(StandardNormal))
}

fn guided(model: &dyn NoisePredictor, fused: &Tensor, cond: &ConditionBundle, guidance: Option<f64>) -> Result<Array4<f64>> {
    let eps = to_array4(&model.predict_noise(fused, cond)?)?;
    match guidance {
        None => Ok(eps),
        Some(w) => {
            let uncond = ConditionBundle {
                text_tokens: None,
                garment_tokens: None,
                ..cond.clone()
            };
            let eps_u = to_array4(&model.predict_noise(fused, &uncond)?)?;
            Ok(&eps_u + &((&eps - &eps_u) * w))
        }
    }
}

/// Writes `√ᾱ · known + √(1 − ᾱ) · n` into every position with `m_z = 0`.
fn resample_known(z: &mut Array4<f64>, known: &Array4<f64>, mask: &LatentMask, alpha_bar: f64, rng: &mut ChaCha8Rng) {
    let noise = standard_normal(z.dim(), rng);
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    ndarray::Zip::from(z)
        .and(known)
        .and(&noise)
        .and_broadcast(mask.data())
        .for_each(|v, &k, &n, &m| {
            if m == 0.0 {
                *v = a * k + b * n;
            }
        });
}

/// Ancestral sampling from a given starting latent over an explicit timestep
/// sequence. The model input at each step is the fuse of the current latent,
/// the mask and the masked-video latent. `cfg.steps` and `cfg.seed` are not
/// used here; `rng` drives all noise.
#[allow(clippy::too_many_arguments)]
pub fn sample_from(
    model: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    initial: Array4<f64>,
    mask: &LatentMask,
    masked_latent: &LatentVideo,
    cond: &ConditionBundle,
    timesteps: &[usize],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LatentVideo> {
    mask.check_aligned(masked_latent)?;
    let mut z = masked_latent.with_data(initial)?;
    for (i, &t) in timesteps.iter().enumerate() {
        let alpha_bar = schedule.alpha_bar(t)?;
        let alpha_bar_prev = match timesteps.get(i + 1) {
            Some(&p) => schedule.alpha_bar(p)?,
            None => 1.0,
        };
        if cfg.resample_known {
            let mut data = z.data().clone();
            resample_known(&mut data, masked_latent.data(), mask, alpha_bar, rng);
            z = z.with_data(data)?;
        }
        let step = PosteriorStep::new(alpha_bar, alpha_bar_prev);
        let fused = fuse_inputs(&z, mask, masked_latent)?;
        let eps = guided(model, &to_tensor(fused.data())?, &cond.with_timestep(t), cfg.guidance)?;
        let mut next = Array4::zeros(z.data().dim());
        ndarray::Zip::from(&mut next)
            .and(z.data())
            .and(&eps)
            .for_each(|n, &zt, &e| *n = step.mean(zt, e));
        if step.variance > 0.0 && cfg.noise_scale != 0.0 {
            let noise = standard_normal(next.dim(), rng);
            next.scaled_add(cfg.noise_scale * step.variance.sqrt(), &noise);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("sampler diverged at timestep {t}")));
        }
        z = z.with_data(next)?;
    }
    if cfg.resample_known {
        let mut data = z.data().clone();
        ndarray::Zip::from(&mut data)
            .and(masked_latent.data())
            .and_broadcast(mask.data())
            .for_each(|v, &k, &m| {
                if m == 0.0 {
                    *v = k;
                }
            });
        z = z.with_data(data)?;
    }
    Ok(z)
}

/// Samples a latent from pure noise, deterministically given `cfg.seed`.
pub fn sample(
    model: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    mask: &LatentMask,
    masked_latent: &LatentVideo,
    cond: &ConditionBundle,
    cfg: &SamplerConfig,
) -> Result<LatentVideo> {
    let timesteps = timestep_sequence(schedule.len(), cfg.steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = standard_normal(masked_latent.data().dim(), &mut rng);
    sample_from(
        model,
        schedule,
        initial,
        mask,
        masked_latent,
        cond,
        &timesteps,
        cfg,
        &mut rng,
    )
}

/// Draws the initial noise `sample` would start from for a given seed.
pub fn initial_noise(dims: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    standard_normal(dims, &mut ChaCha8Rng::seed_from_u64(seed))
}
