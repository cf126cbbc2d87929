use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::attention::{Attention, DualCrossAttention};
use super::embed::{PositionalEmbedding3d, TimestepEmbedder};
use super::layers::{LayerNorm, Linear, Mlp};
use super::params::{Init, ParamBuilder};
use super::patchify::{patchify, unpatchify, TokenSequence};
use crate::conditioning::ConditionBundle;
use crate::{Error, Result};

fn default_mlp_ratio() -> usize {
    4
}

fn default_freq_dim() -> usize {
    64
}

/// Diffusion-transformer hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiTConfig {
    pub depth: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub patch_size: usize,
    pub latent_channels: usize,
    pub text_dim: usize,
    pub garment_dim: usize,
    /// Strength of the garment cross-attention branch.
    #[serde(default)]
    pub garment_scale: f64,
    /// Whether the garment cross-attention branch exists at all.
    #[serde(default)]
    pub garment_adapter: bool,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default = "default_freq_dim")]
    pub timestep_freq_dim: usize,
    /// Largest latent grid supported by the positional tables.
    pub max_latent_frames: usize,
    pub max_latent_height: usize,
    pub max_latent_width: usize,
    #[serde(default)]
    pub zero_init_head: bool,
}

impl DiTConfig {
    /// Small geometry used by unit tests.
    pub fn tiny(latent_channels: usize) -> Self {
        Self {
            depth: 1,
            model_dim: 8,
            heads: 2,
            patch_size: 1,
            latent_channels,
            text_dim: 6,
            garment_dim: 5,
            garment_scale: 1.0,
            garment_adapter: true,
            mlp_ratio: 2,
            timestep_freq_dim: 8,
            max_latent_frames: 4,
            max_latent_height: 4,
            max_latent_width: 4,
            zero_init_head: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("depth", self.depth),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("patch_size", self.patch_size),
            ("latent_channels", self.latent_channels),
            ("text_dim", self.text_dim),
            ("garment_dim", self.garment_dim),
            ("mlp_ratio", self.mlp_ratio),
            ("timestep_freq_dim", self.timestep_freq_dim),
            ("max_latent_frames", self.max_latent_frames),
            ("max_latent_height", self.max_latent_height),
            ("max_latent_width", self.max_latent_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if self.timestep_freq_dim % 2 != 0 {
            return Err(Error::Config("timestep_freq_dim must be even".into()));
        }
        if !(self.garment_scale >= 0.0 && self.garment_scale.is_finite()) {
            return Err(Error::Config("garment_scale must be a finite non-negative number".into()));
        }
        Ok(())
    }

    /// Checks a latent grid against patch divisibility and table sizes.
    pub fn check_latent(&self, frames: usize, height: usize, width: usize, channels: usize) -> Result<()> {
        let p = self.patch_size;
        if channels != self.latent_channels {
            return Err(Error::Config(format!(
                "latent has {channels} channels, model expects {}",
                self.latent_channels
            )));
        }
        if height % p != 0 || width % p != 0 {
            return Err(Error::Config(format!("latent {height}x{width} not divisible by patch {p}")));
        }
        if frames > self.max_latent_frames || height > self.max_latent_height || width > self.max_latent_width {
            return Err(Error::Config(format!(
                "latent {frames}x{height}x{width} exceeds model limit {}x{}x{}",
                self.max_latent_frames, self.max_latent_height, self.max_latent_width
            )));
        }
        Ok(())
    }
}

/// One full 3D attention layer:
/// pre-norm → self-attention → residual → text/garment cross-attention
/// (with residual) → post-norm → FFN → residual.
#[derive(Debug, Clone)]
pub struct DiTBlock {
    norm1: LayerNorm,
    self_attn: Attention,
    cross: DualCrossAttention,
    norm2: LayerNorm,
    ffn: Mlp,
}

impl DiTBlock {
    pub fn new(pb: &ParamBuilder<'_>, cfg: &DiTConfig) -> Result<Self> {
        let d = cfg.model_dim;
        Ok(Self {
            norm1: LayerNorm::new(&pb.pp("norm1"), d)?,
            self_attn: Attention::new(&pb.pp("self_attn"), d, d, cfg.heads)?,
            cross: DualCrossAttention::new(
                pb,
                d,
                cfg.text_dim,
                cfg.garment_adapter.then_some(cfg.garment_dim),
                cfg.heads,
            )?,
            norm2: LayerNorm::new(&pb.pp("norm2"), d)?,
            ffn: Mlp::new(&pb.pp("ffn"), d, d * cfg.mlp_ratio, d)?,
        })
    }

    pub fn self_attention(&self) -> &Attention {
        &self.self_attn
    }

    pub fn cross_attention(&self) -> &DualCrossAttention {
        &self.cross
    }

    pub fn norms(&self) -> (&LayerNorm, &LayerNorm) {
        (&self.norm1, &self.norm2)
    }

    pub fn ffn(&self) -> &Mlp {
        &self.ffn
    }

    pub fn forward(&self, x: &Tensor, cond: &ConditionBundle, garment_scale: f64) -> Result<Tensor> {
        let normed = self.norm1.forward(x)?;
        let h = (x + self.self_attn.forward(&normed, &normed)?)?;
        let h = self
            .cross
            .forward(&h, cond.text_tokens.as_ref(), cond.garment_tokens.as_ref(), garment_scale)?;
        let ff = self.ffn.forward(&self.norm2.forward(&h)?)?;
        Ok((h + ff)?)
    }
}

/// The denoiser `ε_θ(z_t, t, c)`, predicting the injected noise.
#[derive(Debug, Clone)]
pub struct DiT {
    cfg: DiTConfig,
    num_timesteps: usize,
    patch_embed: Linear,
    pos: PositionalEmbedding3d,
    time: TimestepEmbedder,
    blocks: Vec<DiTBlock>,
    head: Linear,
}

impl DiT {
    pub fn new(pb: &ParamBuilder<'_>, cfg: &DiTConfig, num_timesteps: usize) -> Result<Self> {
        cfg.validate()?;
        if num_timesteps == 0 {
            return Err(Error::Config("schedule must have at least one timestep".into()));
        }
        let d = cfg.model_dim;
        let p = cfg.patch_size;
        let patch_features = p * p * cfg.latent_channels;
        let blocks = (0..cfg.depth)
            .map(|i| DiTBlock::new(&pb.pp(format!("blocks.{i}")), cfg))
            .collect::<Result<Vec<_>>>()?;
        let head = if cfg.zero_init_head {
            Linear::with_init(&pb.pp("head"), d, patch_features, Init::Zeros, Init::Zeros)?
        } else {
            Linear::new(&pb.pp("head"), d, patch_features)?
        };
        Ok(Self {
            cfg: cfg.clone(),
            num_timesteps,
            patch_embed: Linear::new(&pb.pp("patch_embed"), patch_features, d)?,
            pos: PositionalEmbedding3d::new(
                &pb.pp("pos_embed"),
                cfg.max_latent_frames,
                cfg.max_latent_height / p,
                cfg.max_latent_width / p,
                d,
            )?,
            time: TimestepEmbedder::new(&pb.pp("time_embed"), cfg.timestep_freq_dim, d)?,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &DiTConfig {
        &self.cfg
    }

    pub fn num_timesteps(&self) -> usize {
        self.num_timesteps
    }

    pub fn garment_scale(&self) -> f64 {
        self.cfg.garment_scale
    }

    pub fn set_garment_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("garment scale {scale} must be finite and non-negative")));
        }
        self.cfg.garment_scale = scale;
        Ok(())
    }

    pub fn blocks(&self) -> &[DiTBlock] {
        &self.blocks
    }

    pub fn patch_embed(&self) -> &Linear {
        &self.patch_embed
    }

    pub fn positional(&self) -> &PositionalEmbedding3d {
        &self.pos
    }

    pub fn timestep_embedder(&self) -> &TimestepEmbedder {
        &self.time
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// Full forward pass on a fused `[T, h, w, C]` latent; returns the
    /// predicted noise with the same shape.
    ///
    /// The pose latent, when present, is added in latent space before
    /// patchify; positional and timestep embeddings are added to every token.
    pub fn forward(&self, fused: &Tensor, cond: &ConditionBundle) -> Result<Tensor> {
        if cond.timestep >= self.num_timesteps {
            return Err(Error::Contract(format!(
                "timestep {} outside schedule of {} steps",
                cond.timestep, self.num_timesteps
            )));
        }
        let (t, h, w, c) = fused.dims4()?;
        self.cfg.check_latent(t, h, w, c)?;
        let input = match &cond.pose_latent {
            Some(pose) => {
                if pose.dims() != fused.dims() {
                    return Err(Error::Alignment(format!(
                        "pose latent {:?} does not match latent {:?}",
                        pose.dims(),
                        fused.dims()
                    )));
                }
                (fused + pose)?
            }
            None => fused.clone(),
        };
        let patches = patchify(&input, self.cfg.patch_size)?;
        let layout = patches.layout().expect("patchify always records layout");
        let mut x = self.patch_embed.forward(patches.data())?;
        x = (x + self.pos.forward(&layout)?)?;
        x = x.broadcast_add(&self.time.forward(cond.timestep)?)?;
        for block in &self.blocks {
            x = block.forward(&x, cond, self.cfg.garment_scale)?;
        }
        let out = self.head.forward(&x)?;
        unpatchify(&TokenSequence::new(out, Some(layout))?)
    }
}
