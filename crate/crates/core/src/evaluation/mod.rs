//! Video quality metrics.

mod lpips;
mod recon;
mod ssim;
mod vfid;

use serde::{Deserialize, Serialize};

pub use lpips::{perceptual_by_name, GradientPerceptual, PerceptualDistance};
pub use recon::{flicker_proxy, inpaint_reconstruction};
pub use ssim::{gaussian_window, ssim, video_ssim, window_side, K1, K2, SIGMA, WINDOW};
pub use vfid::{
    feature_extractor_by_name, frechet_distance, gaussian_fit, vfid, FeatureExtractor3D, PooledStats3D,
    COVARIANCE_EPS,
};

use crate::diffusion::LossForm;
use crate::latent_codec::{MaskVideo, Video};
use crate::Result;

/// Metric values; a field is present only when its inputs were supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "SSIM", skip_serializing_if = "Option::is_none", default)]
    pub ssim: Option<f64>,
    #[serde(rename = "LPIPS", skip_serializing_if = "Option::is_none", default)]
    pub lpips: Option<f64>,
    #[serde(rename = "VFID", skip_serializing_if = "Option::is_none", default)]
    pub vfid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inpaint_rec: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flicker: Option<f64>,
}

/// Per-clip metrics. VFID is a set-level metric and is left empty here.
pub fn evaluate_clip(
    real: &Video,
    generated: &Video,
    mask: Option<&MaskVideo>,
    perceptual: &dyn PerceptualDistance,
    form: LossForm,
) -> Result<MetricReport> {
    Ok(MetricReport {
        ssim: Some(video_ssim(real, generated)?),
        lpips: Some(perceptual.video_distance(real, generated)?),
        vfid: None,
        inpaint_rec: mask.map(|m| inpaint_reconstruction(real, generated, m, form)).transpose()?,
        flicker: Some(flicker_proxy(generated)),
    })
}

/// Averages per-clip fields and attaches the set-level VFID.
pub fn aggregate(reports: &[MetricReport], vfid: Option<f64>) -> MetricReport {
    let mean = |f: fn(&MetricReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    MetricReport {
        ssim: mean(|r| r.ssim),
        lpips: mean(|r| r.lpips),
        vfid,
        inpaint_rec: mean(|r| r.inpaint_rec),
        flicker: mean(|r| r.flicker),
    }
}
