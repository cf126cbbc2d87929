//! Text, garment and pose conditioning.

mod bundle;
mod garment;
mod pose;
mod text;

use serde::{Deserialize, Serialize};

pub use bundle::{build_condition, ConditionBundle, ConditionInputs, ConditionPlugins, Conditioner};
pub use garment::{
    encode_garment, extract_garment_features, ExtractorCapability, GarmentEncoder, GarmentImage,
    PatchProjectionExtractor, VisualFeatureExtractor,
};
pub use pose::{encode_pose, pool_pose, synthetic_pose, PoseEncoder, PoseVideo};
pub use text::{HashTextEmbedder, TextEmbedder};

use crate::{Error, Result};

/// Sizes of the conditioning inputs and trainable encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    #[serde(default = "default_garment_side")]
    pub garment_height: usize,
    #[serde(default = "default_garment_side")]
    pub garment_width: usize,
    #[serde(default = "default_hidden")]
    pub garment_hidden: usize,
    #[serde(default = "default_pose_channels")]
    pub pose_channels: usize,
    #[serde(default = "default_hidden")]
    pub pose_hidden: usize,
}

fn default_garment_side() -> usize {
    16
}

fn default_hidden() -> usize {
    32
}

fn default_pose_channels() -> usize {
    3
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            garment_height: default_garment_side(),
            garment_width: default_garment_side(),
            garment_hidden: default_hidden(),
            pose_channels: default_pose_channels(),
            pose_hidden: default_hidden(),
        }
    }
}

/// Registry names of the frozen plugins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginNames {
    #[serde(default = "default_codec")]
    pub codec: String,
    #[serde(default = "default_text")]
    pub text: String,
    #[serde(default = "default_garment_a")]
    pub garment_a: String,
    #[serde(default = "default_garment_b")]
    pub garment_b: String,
    #[serde(default = "default_text_tokens")]
    pub text_max_tokens: usize,
}

fn default_codec() -> String {
    "orthogonal2x".into()
}

fn default_text() -> String {
    "hash".into()
}

fn default_garment_a() -> String {
    "patch_vae".into()
}

fn default_garment_b() -> String {
    "patch_semantic".into()
}

fn default_text_tokens() -> usize {
    16
}

impl Default for PluginNames {
    fn default() -> Self {
        Self {
            codec: default_codec(),
            text: default_text(),
            garment_a: default_garment_a(),
            garment_b: default_garment_b(),
            text_max_tokens: default_text_tokens(),
        }
    }
}

pub fn text_embedder_by_name(name: &str, dim: usize, max_tokens: usize) -> Result<Box<dyn TextEmbedder>> {
    match name {
        "hash" => Ok(Box::new(HashTextEmbedder::new(dim, max_tokens))),
        other => Err(Error::Config(format!("unknown text embedder `{other}`"))),
    }
}

/// Feature extractors have fixed output dims per name.
pub fn extractor_by_name(name: &str) -> Result<Box<dyn VisualFeatureExtractor>> {
    match name {
        "patch_vae" => Ok(Box::new(PatchProjectionExtractor::vae_like(16))),
        "patch_semantic" => Ok(Box::new(PatchProjectionExtractor::semantic_like(32))),
        other => Err(Error::Config(format!("unknown feature extractor `{other}`"))),
    }
}

impl ConditionPlugins {
    pub fn from_names(names: &PluginNames, text_dim: usize) -> Result<Self> {
        Ok(Self {
            text: text_embedder_by_name(&names.text, text_dim, names.text_max_tokens)?,
            garment_a: extractor_by_name(&names.garment_a)?,
            garment_b: extractor_by_name(&names.garment_b)?,
        })
    }
}
