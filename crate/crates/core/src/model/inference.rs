use super::VitiModel;
use crate::conditioning::{build_condition, GarmentImage, PoseVideo};
use crate::diffusion::{sample, SamplerConfig};
use crate::latent_codec::{composite_output, make_agnostic, reshape_mask, MaskVideo, Video};
use crate::Result;

/// One inpainting job.
#[derive(Debug, Clone)]
pub struct InferenceRequest<'a> {
    pub video: &'a Video,
    pub mask: &'a MaskVideo,
    pub prompt: &'a str,
    pub garment: Option<&'a GarmentImage>,
    pub pose: Option<&'a PoseVideo>,
    pub sampler: SamplerConfig,
}

/// Agnostic video → encode → sample → decode → composite with the original.
/// An all-zero mask returns the input unchanged.
pub fn inpaint(model: &VitiModel, req: &InferenceRequest<'_>) -> Result<Video> {
    let (n, h, w) = (req.video.frames(), req.video.height(), req.video.width());
    if req.mask.is_empty() {
        composite_output(req.video, req.video, req.mask)?;
        return Ok(req.video.clone());
    }
    let shape = model.spec().latent_shape(n, h, w)?;
    let agnostic = make_agnostic(req.video, req.mask)?;
    let masked_latent = model.codec().encode(&agnostic)?;
    let latent_mask = reshape_mask(req.mask, &shape)?;
    let cond = build_condition(
        req.prompt,
        req.garment,
        req.pose,
        0,
        model.plugins(),
        model.conditioner(),
        &shape,
    )?;
    let z0 = sample(model, model.schedule(), &latent_mask, &masked_latent, &cond, &req.sampler)?;
    let generated = model.codec().decode(&z0)?.clamped().with_fps(req.video.fps);
    composite_output(&generated, req.video, req.mask)
}
