//! The assembled try-on inpainting model: denoiser, conditioning encoders,
//! frozen plugins and schedule, plus checkpoint IO and inference.

mod checkpoint;
mod inference;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

pub use checkpoint::{CheckpointManifest, LoadReport, TensorInfo, CHECKPOINT_FORMAT, MANIFEST_FILE, WEIGHTS_FILE};
pub use inference::{inpaint, InferenceRequest};

use crate::conditioning::{
    ConditionBundle, ConditionConfig, ConditionPlugins, Conditioner, ExtractorCapability, GarmentEncoder,
    PluginNames, PoseEncoder,
};
use crate::diffusion::{NoisePredictor, NoiseSchedule, ScheduleConfig};
use crate::dit::{DiT, DiTConfig, ParamStore};
use crate::latent_codec::{codec_by_name, CodecCapability, LatentShape, VideoCodec};
use crate::{Error, Result};

/// Everything needed to rebuild a model's architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dit: DiTConfig,
    #[serde(default)]
    pub conditioning: ConditionConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub plugins: PluginNames,
}

/// Output dimensions declared by every plugin, checked before any compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityReport {
    pub codec: CodecCapability,
    pub text_dim: usize,
    pub garment_a: ExtractorCapability,
    pub garment_b: ExtractorCapability,
}

impl ModelSpec {
    /// Peak learning rate the toy configuration is tuned for (with cosine decay).
    pub const TOY_LEARNING_RATE: f64 = 3e-3;

    /// Small try-on configuration for 8×32×24 clips that trains on a CPU in
    /// minutes. Width stays above the 96 patch features; the 50-step linear
    /// schedule ends at ᾱ ≈ 4.5e-3.
    pub fn toy() -> Self {
        Self {
            dit: DiTConfig {
                depth: 2,
                model_dim: 128,
                heads: 4,
                patch_size: 2,
                latent_channels: 24,
                text_dim: 16,
                garment_dim: 32,
                garment_scale: 1.0,
                garment_adapter: true,
                mlp_ratio: 4,
                timestep_freq_dim: 32,
                max_latent_frames: 5,
                max_latent_height: 16,
                max_latent_width: 12,
                zero_init_head: false,
            },
            conditioning: ConditionConfig::default(),
            schedule: ScheduleConfig {
                num_timesteps: 50,
                beta_start: 1e-3,
                beta_end: 2e-1,
            },
            plugins: PluginNames::default(),
        }
    }

    /// Whether this configuration carries the garment adapter and the pose encoder.
    pub fn is_try_on(&self) -> bool {
        self.dit.garment_adapter
    }

    /// Inpainting variant: no garment branch, no pose encoder.
    pub fn inpainting(&self) -> Self {
        let mut spec = self.clone();
        spec.dit.garment_adapter = false;
        spec.dit.garment_scale = 0.0;
        spec
    }

    pub fn try_on(&self, garment_scale: f64) -> Self {
        let mut spec = self.clone();
        spec.dit.garment_adapter = true;
        spec.dit.garment_scale = garment_scale;
        spec
    }

    /// Validates the architecture against the plugins' capability records.
    pub fn validate(&self) -> Result<CapabilityReport> {
        self.dit.validate()?;
        let codec = codec_by_name(&self.plugins.codec)?;
        let plugins = ConditionPlugins::from_names(&self.plugins, self.dit.text_dim)?;
        let report = CapabilityReport {
            codec: codec.capability(),
            text_dim: plugins.text.dim(),
            garment_a: plugins
                .garment_a
                .capability(self.conditioning.garment_height, self.conditioning.garment_width)?,
            garment_b: plugins
                .garment_b
                .capability(self.conditioning.garment_height, self.conditioning.garment_width)?,
        };
        if report.codec.latent_channels != self.dit.latent_channels {
            return Err(Error::Config(format!(
                "codec `{}` emits {} channels but the model expects {}",
                report.codec.name, report.codec.latent_channels, self.dit.latent_channels
            )));
        }
        if report.text_dim != self.dit.text_dim {
            return Err(Error::Config(format!(
                "text embedder dim {} does not match model text_dim {}",
                report.text_dim, self.dit.text_dim
            )));
        }
        if self.conditioning.pose_channels == 0 {
            return Err(Error::Config("pose_channels must be positive".into()));
        }
        if self.schedule.num_timesteps == 0 {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        NoiseSchedule::from_config(&self.schedule)?;
        Ok(report)
    }

    /// Latent geometry for a clip, checked against the model's limits.
    pub fn latent_shape(&self, frames: usize, height: usize, width: usize) -> Result<LatentShape> {
        let codec = codec_by_name(&self.plugins.codec)?;
        let shape = codec.latent_shape(frames, height, width)?;
        self.dit.check_latent(shape.frames, shape.height, shape.width, shape.channels)?;
        Ok(shape)
    }
}

/// A built model. Parameter names are stable: `dit.*`, `garment_encoder.*`,
/// `pose_encoder.*`.
pub struct VitiModel {
    spec: ModelSpec,
    store: ParamStore,
    dit: DiT,
    conditioner: Conditioner,
    codec: Box<dyn VideoCodec>,
    plugins: ConditionPlugins,
    schedule: NoiseSchedule,
}

impl VitiModel {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let caps = spec.validate()?;
        let store = ParamStore::new(seed);
        let root = store.root();
        let dit = DiT::new(&root.pp("dit"), &spec.dit, spec.schedule.num_timesteps)?;
        let conditioner = if spec.is_try_on() {
            let c = &spec.conditioning;
            Conditioner {
                garment: Some(GarmentEncoder::new(
                    &root.pp("garment_encoder"),
                    caps.garment_a.dim,
                    caps.garment_b.dim,
                    spec.dit.garment_dim,
                    c.garment_hidden,
                )?),
                pose: Some(PoseEncoder::new(
                    &root.pp("pose_encoder"),
                    c.pose_channels,
                    c.pose_hidden,
                    spec.dit.latent_channels,
                )?),
            }
        } else {
            Conditioner::default()
        };
        Ok(Self {
            spec: spec.clone(),
            codec: codec_by_name(&spec.plugins.codec)?,
            plugins: ConditionPlugins::from_names(&spec.plugins, spec.dit.text_dim)?,
            schedule: NoiseSchedule::from_config(&spec.schedule)?,
            store,
            dit,
            conditioner,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dit(&self) -> &DiT {
        &self.dit
    }

    pub fn conditioner(&self) -> &Conditioner {
        &self.conditioner
    }

    pub fn codec(&self) -> &dyn VideoCodec {
        self.codec.as_ref()
    }

    pub fn plugins(&self) -> &ConditionPlugins {
        &self.plugins
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn set_garment_scale(&mut self, scale: f64) -> Result<()> {
        self.dit.set_garment_scale(scale)?;
        self.spec.dit.garment_scale = scale;
        Ok(())
    }
}

impl NoisePredictor for VitiModel {
    fn predict_noise(&self, fused: &Tensor, cond: &ConditionBundle) -> Result<Tensor> {
        self.dit.forward(fused, cond)
    }
}
