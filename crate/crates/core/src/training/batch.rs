use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::Sample;
use crate::conditioning::{ConditionInputs, ConditionPlugins};
use crate::diffusion::{q_sample_array, NoiseSchedule};
use crate::latent_codec::{fuse_inputs, make_agnostic, reshape_mask, LatentMask, MaskVideo, VideoCodec};
use crate::masking::{from_segmentation_labels, generate_box_mask, maybe_invert, MaskSpec, MaskStrategy};
use crate::seed::SeedStreams;
use crate::{Error, Result};

/// One prepared training example. Everything here is gradient-free input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub id: String,
    /// Mask actually used, in pixel space.
    pub pixel_mask: MaskVideo,
    /// `z_t + E(agnostic) + m_z`, `[T, h, w, C]`.
    pub fused: Array4<f64>,
    pub noise: Array4<f64>,
    pub mask: LatentMask,
    pub timestep: usize,
    pub inputs: ConditionInputs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub step: usize,
    pub items: Vec<BatchItem>,
    /// Record ids dropped because their latent mask was empty.
    pub rejected: Vec<String>,
}

/// Frozen components and flags needed to prepare batches. Shareable across
/// data workers.
pub struct BatchContext<'a> {
    pub codec: &'a dyn VideoCodec,
    pub plugins: &'a ConditionPlugins,
    pub schedule: &'a NoiseSchedule,
    pub masks: Vec<MaskSpec>,
    pub use_garment: bool,
    pub use_pose: bool,
    pub require_prompt: bool,
    pub condition_dropout: f64,
    pub batch_size: usize,
    pub seeds: SeedStreams,
}

fn draw_mask(spec: &MaskSpec, sample: &Sample, rng: &mut ChaCha8Rng) -> Result<MaskVideo> {
    let v = &sample.video;
    match spec.strategy {
        MaskStrategy::TimeInvariantBox | MaskStrategy::TimeVariantBox => {
            generate_box_mask(spec, v.frames(), v.height(), v.width(), rng)
        }
        MaskStrategy::Instance | MaskStrategy::Garment => {
            let labels = sample.labels.as_ref().ok_or_else(|| {
                Error::Config(format!("{:?} masks need a segmentation map", spec.strategy))
            })?;
            let wanted = if spec.strategy == MaskStrategy::Instance {
                &sample.instance_labels
            } else {
                &sample.garment_labels
            };
            let mask = from_segmentation_labels(labels, wanted)?;
            Ok(maybe_invert(&mask, spec.invert_prob, rng)?.0)
        }
    }
}

/// Full data path for one record: mask, agnostic video, encode, reshape
/// mask, draw `t` and `ε`, forward-diffuse, fuse, and prepare conditions.
pub fn prepare_item(ctx: &BatchContext<'_>, sample: &Sample, rng: &mut ChaCha8Rng) -> Result<BatchItem> {
    let mut run = || -> Result<BatchItem> {
        if ctx.require_prompt && sample.prompt.trim().is_empty() {
            return Err(Error::Contract("this stage needs a non-empty prompt".into()));
        }
        if ctx.masks.is_empty() {
            return Err(Error::Config("no mask generators configured".into()));
        }
        let spec = &ctx.masks[rng.random_range(0..ctx.masks.len())];
        let pixel_mask = draw_mask(spec, sample, rng)?;
        let v = &sample.video;
        let shape = ctx.codec.latent_shape(v.frames(), v.height(), v.width())?;
        let mask = reshape_mask(&pixel_mask, &shape)?;
        if mask.active_count() == 0 {
            return Err(Error::EmptyMask("latent mask has no active entries".into()));
        }
        let z0 = ctx.codec.encode(v)?;
        let masked = ctx.codec.encode(&make_agnostic(v, &pixel_mask)?)?;
        let timestep = rng.random_range(0..ctx.schedule.len());
        let noise = Array4::from_shape_simple_fn(shape.dims(), || rng.sample(StandardNormal));
        let zt = z0.with_data(q_sample_array(ctx.schedule, z0.data(), timestep, &noise)?)?;
        let fused = fuse_inputs(&zt, &mask, &masked)?.into_data();
        let drop = ctx.condition_dropout > 0.0 && rng.random_bool(ctx.condition_dropout);
        let prompt = if drop { "" } else { sample.prompt.as_str() };
        let garment = if ctx.use_garment && !drop {
            Some(sample.garment.as_ref().ok_or_else(|| Error::Config("record has no garment image".into()))?)
        } else {
            None
        };
        let pose = if ctx.use_pose {
            Some(sample.pose.as_ref().ok_or_else(|| Error::Config("record has no pose map".into()))?)
        } else {
            None
        };
        let inputs = ctx.plugins.prepare(prompt, garment, pose, &shape)?;
        Ok(BatchItem {
            id: sample.id.clone(),
            pixel_mask,
            fused,
            noise,
            mask,
            timestep,
            inputs,
        })
    };
    run().map_err(|e| e.for_record(&sample.id))
}

/// Batch for `step`, determined only by the root seed and the step index
/// (never by which worker builds it). Samples with empty latent masks are
/// dropped and listed in `rejected`.
pub fn build_batch(ctx: &BatchContext<'_>, samples: &[Sample], step: usize) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut rng = ctx.seeds.indexed_rng("data", step as u64);
    let mut items = Vec::with_capacity(ctx.batch_size);
    let mut rejected = Vec::new();
    for _ in 0..ctx.batch_size {
        let sample = &samples[rng.random_range(0..samples.len())];
        let mut item_rng = ChaCha8Rng::seed_from_u64(rng.random());
        match prepare_item(ctx, sample, &mut item_rng) {
            Ok(item) => items.push(item),
            Err(e) if matches!(e.root(), Error::EmptyMask(_)) => {
                log::warn!("step {step}: rejected sample {}: {e}", sample.id);
                rejected.push(sample.id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Batch { step, items, rejected })
}
