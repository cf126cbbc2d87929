use candle_core::Tensor;
use ndarray::{Array2, Array4};

use super::garment::{extract_garment_features, GarmentEncoder, GarmentImage, VisualFeatureExtractor};
use super::pose::{pool_pose, PoseEncoder, PoseVideo};
use super::text::TextEmbedder;
use crate::latent_codec::LatentShape;
use crate::tensor::to_tensor;
use crate::{Error, Result};

/// Everything the denoiser is conditioned on besides the fused latent.
#[derive(Debug, Clone)]
pub struct ConditionBundle {
    /// `[M, text_dim]`; `None` or `M = 0` means unconditional.
    pub text_tokens: Option<Tensor>,
    /// `[K, garment_dim]`; `None` or `K = 0` disables the garment branch.
    pub garment_tokens: Option<Tensor>,
    /// `[T, h, w, C]`, added to the fused latent before patchify.
    pub pose_latent: Option<Tensor>,
    pub timestep: usize,
}

impl ConditionBundle {
    pub fn unconditional(timestep: usize) -> Self {
        Self {
            text_tokens: None,
            garment_tokens: None,
            pose_latent: None,
            timestep,
        }
    }

    pub fn with_timestep(&self, timestep: usize) -> Self {
        Self {
            timestep,
            ..self.clone()
        }
    }

    pub fn text_len(&self) -> usize {
        self.text_tokens.as_ref().map_or(0, |t| t.dims()[0])
    }

    pub fn garment_len(&self) -> usize {
        self.garment_tokens.as_ref().map_or(0, |t| t.dims()[0])
    }
}

/// Plugin outputs for one sample. These come from frozen components and carry
/// no gradient, so they can be computed once and reused across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionInputs {
    pub text: Array2<f64>,
    pub garment: Option<(Array2<f64>, Array2<f64>)>,
    /// Pose averaged onto the latent grid, `[T, h, w, P]`.
    pub pose: Option<Array4<f64>>,
}

/// Frozen plugin handles used to build condition inputs.
pub struct ConditionPlugins {
    pub text: Box<dyn TextEmbedder>,
    pub garment_a: Box<dyn VisualFeatureExtractor>,
    pub garment_b: Box<dyn VisualFeatureExtractor>,
}

impl ConditionPlugins {
    pub fn prepare(
        &self,
        prompt: &str,
        garment: Option<&GarmentImage>,
        pose: Option<&PoseVideo>,
        target: &LatentShape,
    ) -> Result<ConditionInputs> {
        let text = self.text.embed(prompt)?;
        let garment = garment
            .map(|g| extract_garment_features(g, self.garment_a.as_ref(), self.garment_b.as_ref()))
            .transpose()?;
        let pose = pose.map(|p| pool_pose(p, target)).transpose()?;
        Ok(ConditionInputs { text, garment, pose })
    }
}

/// Trainable conditioning encoders. Both are absent for the inpainting model.
#[derive(Debug, Clone, Default)]
pub struct Conditioner {
    pub garment: Option<GarmentEncoder>,
    pub pose: Option<PoseEncoder>,
}

impl Conditioner {
    /// Runs the trainable encoders over prepared inputs.
    pub fn bundle(&self, inputs: &ConditionInputs, timestep: usize) -> Result<ConditionBundle> {
        let text_tokens = if inputs.text.nrows() == 0 {
            None
        } else {
            Some(to_tensor(&inputs.text)?)
        };
        let garment_tokens = match (&inputs.garment, &self.garment) {
            (None, _) => None,
            (Some((a, b)), Some(enc)) => Some(enc.forward(&to_tensor(a)?, &to_tensor(b)?)?),
            (Some(_), None) => {
                return Err(Error::Contract("garment supplied but the model has no garment encoder".into()))
            }
        };
        let pose_latent = match (&inputs.pose, &self.pose) {
            (None, _) => None,
            (Some(p), Some(enc)) => Some(enc.forward_pooled(p)?),
            (Some(_), None) => return Err(Error::Contract("pose supplied but the model has no pose encoder".into())),
        };
        Ok(ConditionBundle {
            text_tokens,
            garment_tokens,
            pose_latent,
            timestep,
        })
    }
}

/// Assembles a bundle from raw inputs in one call.
pub fn build_condition(
    prompt: &str,
    garment: Option<&GarmentImage>,
    pose: Option<&PoseVideo>,
    timestep: usize,
    plugins: &ConditionPlugins,
    conditioner: &Conditioner,
    target: &LatentShape,
) -> Result<ConditionBundle> {
    let inputs = plugins.prepare(prompt, garment, pose, target)?;
    conditioner.bundle(&inputs, timestep)
}
