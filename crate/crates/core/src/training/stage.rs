use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diffusion::{LossForm, TEMPORAL_WEIGHT};
use crate::masking::{MaskSpec, MaskStrategy};
use crate::model::CheckpointManifest;
use crate::{Error, Result};

/// Training stage: three inpainting stages, then try-on conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageId {
    #[serde(rename = "1")]
    Stage1,
    #[serde(rename = "2")]
    Stage2,
    #[serde(rename = "3")]
    Stage3,
    #[serde(rename = "viti")]
    Viti,
}

impl StageId {
    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Stage1 => "1",
            StageId::Stage2 => "2",
            StageId::Stage3 => "3",
            StageId::Viti => "viti",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(StageId::Stage1),
            "2" => Ok(StageId::Stage2),
            "3" => Ok(StageId::Stage3),
            "viti" => Ok(StageId::Viti),
            other => Err(Error::Config(format!("unknown stage `{other}`"))),
        }
    }

    /// Stages 1–3 train the text-only inpainting model.
    pub fn is_inpainting(self) -> bool {
        self != StageId::Viti
    }

    /// Later stages use prompts aligned with the mask area.
    pub fn requires_prompt(self) -> bool {
        self != StageId::Stage1
    }

    /// Masks used when a stage config lists none. Stage 1 uses random boxes
    /// with inversion probability 0.5; later stages use segmentation masks
    /// without inversion.
    pub fn default_masks(self) -> Vec<MaskSpec> {
        match self {
            StageId::Stage1 => vec![
                MaskSpec::new(MaskStrategy::TimeInvariantBox).with_invert_prob(0.5),
                MaskSpec::new(MaskStrategy::TimeVariantBox).with_invert_prob(0.5),
            ],
            StageId::Stage2 => vec![MaskSpec::new(MaskStrategy::Instance)],
            StageId::Stage3 | StageId::Viti => vec![MaskSpec::new(MaskStrategy::Garment)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the base rate down to zero at the last step.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine if steps <= 1 => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / (steps - 1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

/// Which parameters the optimiser updates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    #[default]
    All,
    /// Garment encoder, pose encoder and garment cross-attention only.
    AdapterOnly,
    /// Parameters whose name starts with any listed prefix.
    Prefixes(Vec<String>),
}

pub fn is_adapter_param(name: &str) -> bool {
    name.starts_with("garment_encoder.") || name.starts_with("pose_encoder.") || name.contains(".garment_attn.")
}

/// Names the optimiser should update under `policy`.
pub fn adapter_freeze_policy(policy: &FreezePolicy, names: &[String]) -> BTreeSet<String> {
    names
        .iter()
        .filter(|n| match policy {
            FreezePolicy::All => true,
            FreezePolicy::AdapterOnly => is_adapter_param(n),
            FreezePolicy::Prefixes(p) => p.iter().any(|p| n.starts_with(p.as_str())),
        })
        .cloned()
        .collect()
}

fn default_lr() -> f64 {
    1e-5
}

fn default_weight_decay() -> f64 {
    1e-2
}

fn default_alpha() -> f64 {
    TEMPORAL_WEIGHT
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: StageId,
    /// Dataset directory holding `manifest.json`, or the manifest itself.
    pub dataset: PathBuf,
    /// Mask generators; one is drawn uniformly per sample. Empty means the
    /// stage default.
    #[serde(default)]
    pub masks: Vec<MaskSpec>,
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "one")]
    pub batch_size: usize,
    #[serde(default)]
    pub init_checkpoint: Option<PathBuf>,
    /// Output checkpoint directory.
    #[serde(default)]
    pub output: PathBuf,
    /// Temporal loss flag; defaults to on for the try-on stage only.
    #[serde(default)]
    pub temporal_loss: Option<bool>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub loss_form: LossForm,
    /// Garment branch strength; must be absent or 0 before the try-on stage.
    #[serde(default)]
    pub garment_scale: Option<f64>,
    #[serde(default)]
    pub freeze: FreezePolicy,
    /// Probability of dropping text and garment conditions for a sample.
    #[serde(default)]
    pub condition_dropout: f64,
    #[serde(default = "one")]
    pub workers: usize,
}

impl StageConfig {
    pub fn new(stage: StageId, dataset: impl Into<PathBuf>, output: impl Into<PathBuf>, steps: usize) -> Self {
        Self {
            stage,
            dataset: dataset.into(),
            masks: Vec::new(),
            steps,
            learning_rate: default_lr(),
            lr_schedule: LrSchedule::default(),
            weight_decay: default_weight_decay(),
            batch_size: 1,
            init_checkpoint: None,
            output: output.into(),
            temporal_loss: None,
            alpha: default_alpha(),
            loss_form: LossForm::default(),
            garment_scale: None,
            freeze: FreezePolicy::default(),
            condition_dropout: 0.0,
            workers: 1,
        }
    }

    pub fn temporal_enabled(&self) -> bool {
        self.temporal_loss.unwrap_or(self.stage == StageId::Viti)
    }

    /// α passed to the loss, or `None` when the temporal term is off.
    pub fn effective_alpha(&self) -> Option<f64> {
        self.temporal_enabled().then_some(self.alpha)
    }

    pub fn effective_garment_scale(&self) -> f64 {
        if self.stage == StageId::Viti {
            self.garment_scale.unwrap_or(1.0)
        } else {
            0.0
        }
    }

    pub fn mask_specs(&self) -> Vec<MaskSpec> {
        if self.masks.is_empty() {
            self.stage.default_masks()
        } else {
            self.masks.clone()
        }
    }

    /// Checks flags and stage ordering. Cheap: reads at most the init
    /// checkpoint manifest, so it runs before any data is touched.
    pub fn validate(&self) -> Result<()> {
        self.validate_flags()?;
        self.validate_init()
    }

    /// Checks that do not touch the filesystem.
    pub fn validate_flags(&self) -> Result<()> {
        if self.output.as_os_str().is_empty() {
            return Err(Error::Config("stage output directory is not set".into()));
        }
        if self.stage.is_inpainting() {
            if let Some(s) = self.garment_scale {
                if s != 0.0 {
                    return Err(Error::Config(format!(
                        "stage {} trains without garment conditioning; garment_scale must be absent or 0, got {s}",
                        self.stage.as_str()
                    )));
                }
            }
            if self.temporal_loss == Some(true) {
                return Err(Error::Config(format!(
                    "temporal loss is only used in the viti stage, not stage {}",
                    self.stage.as_str()
                )));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.condition_dropout) {
            return Err(Error::Config("condition_dropout must lie in [0, 1]".into()));
        }
        if let Some(s) = self.garment_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config("garment_scale must be non-negative".into()));
            }
        }
        if self.batch_size == 0 || self.workers == 0 {
            return Err(Error::Config("batch_size and workers must be positive".into()));
        }
        for spec in &self.masks {
            spec.validate()?;
        }
        Ok(())
    }

    /// Stage ordering: the viti stage needs a stage-3 (or later) checkpoint.
    pub fn validate_init(&self) -> Result<()> {
        match (&self.init_checkpoint, self.stage) {
            (None, StageId::Viti) => Err(Error::Config(
                "the viti stage must be initialised from a stage-3 checkpoint (init_checkpoint is unset)".into(),
            )),
            (Some(dir), stage) => {
                let manifest = CheckpointManifest::read(dir)?;
                let from = StageId::parse(&manifest.stage)?;
                if stage == StageId::Viti && from < StageId::Stage3 {
                    return Err(Error::Config(format!(
                        "the viti stage must start from a stage-3 checkpoint, {} is from stage {}",
                        dir.display(),
                        manifest.stage
                    )));
                }
                Ok(())
            }
            (None, _) => Ok(()),
        }
    }
}
